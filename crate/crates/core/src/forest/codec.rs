//! Little-endian binary encoding of a trained forest. The out-of-bag record
//! is not persisted; only what prediction needs is.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::tree::{Node, Tree};
use super::{FeatureKind, Forest, ForestMode, Resolved};

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn write_len<W: Write>(w: &mut W, n: usize) -> io::Result<()> {
    w.write_u32::<LE>(u32::try_from(n).map_err(|_| invalid("length exceeds u32"))?)
}

pub(crate) fn write_forest<W: Write>(w: &mut W, f: &Forest) -> io::Result<()> {
    match f.mode {
        ForestMode::Regression => {
            w.write_u8(0)?;
            w.write_u32::<LE>(1)?;
        }
        ForestMode::Probability { n_classes } => {
            w.write_u8(1)?;
            write_len(w, n_classes)?;
        }
    }
    write_len(w, f.kinds.len())?;
    for (kind, &fallback) in f.kinds.iter().zip(&f.fallback_levels) {
        match *kind {
            FeatureKind::Numeric => {
                w.write_u8(0)?;
                w.write_u32::<LE>(0)?;
            }
            FeatureKind::Categorical { n_levels } => {
                w.write_u8(1)?;
                w.write_u32::<LE>(n_levels)?;
            }
        }
        w.write_u32::<LE>(fallback)?;
    }
    write_len(w, f.n_train)?;
    write_len(w, f.resolved.mtry)?;
    write_len(w, f.resolved.min_node_size)?;
    write_len(w, f.resolved.max_depth)?;
    write_len(w, f.trees.len())?;
    for (tree, &seed) in f.trees.iter().zip(&f.tree_seeds) {
        w.write_u64::<LE>(seed)?;
        write_len(w, tree.nodes.len())?;
        for node in &tree.nodes {
            match node {
                Node::Leaf { offset } => {
                    w.write_u8(0)?;
                    w.write_u32::<LE>(*offset)?;
                }
                Node::Numeric { feature, threshold, left, right } => {
                    w.write_u8(1)?;
                    w.write_u32::<LE>(*feature)?;
                    w.write_f64::<LE>(*threshold)?;
                    w.write_u32::<LE>(*left)?;
                    w.write_u32::<LE>(*right)?;
                }
                Node::Categorical { feature, left_set, left, right } => {
                    w.write_u8(2)?;
                    w.write_u32::<LE>(*feature)?;
                    write_len(w, left_set.len())?;
                    for &word in left_set {
                        w.write_u64::<LE>(word)?;
                    }
                    w.write_u32::<LE>(*left)?;
                    w.write_u32::<LE>(*right)?;
                }
            }
        }
        write_len(w, tree.leaf_values.len())?;
        for &v in &tree.leaf_values {
            w.write_f64::<LE>(v)?;
        }
    }
    Ok(())
}

fn read_len<R: Read>(r: &mut R, what: &str, cap: usize) -> io::Result<usize> {
    let n = r.read_u32::<LE>()? as usize;
    if n > cap {
        return Err(invalid(format!("{what} count {n} exceeds limit {cap}")));
    }
    Ok(n)
}

const CAP: usize = 1 << 28;

pub(crate) fn read_forest<R: Read>(r: &mut R) -> io::Result<Forest> {
    let mode_tag = r.read_u8()?;
    let n_classes = read_len(r, "class", CAP)?;
    let mode = match mode_tag {
        0 => ForestMode::Regression,
        1 if n_classes > 0 => ForestMode::Probability { n_classes },
        _ => return Err(invalid(format!("bad forest mode {mode_tag}"))),
    };
    let n_outputs = mode.n_outputs();
    let n_features = read_len(r, "feature", CAP)?;
    let mut kinds = Vec::with_capacity(n_features);
    let mut fallback_levels = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        let tag = r.read_u8()?;
        let n_levels = r.read_u32::<LE>()?;
        kinds.push(match tag {
            0 => FeatureKind::Numeric,
            1 => FeatureKind::Categorical { n_levels },
            _ => return Err(invalid(format!("bad feature kind {tag}"))),
        });
        fallback_levels.push(r.read_u32::<LE>()?);
    }
    let n_train = read_len(r, "row", CAP)?;
    let resolved = Resolved {
        mtry: read_len(r, "mtry", CAP)?,
        min_node_size: read_len(r, "min_node_size", CAP)?,
        max_depth: read_len(r, "max_depth", CAP)?,
    };
    let n_trees = read_len(r, "tree", CAP)?;
    let mut trees = Vec::with_capacity(n_trees);
    let mut tree_seeds = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        tree_seeds.push(r.read_u64::<LE>()?);
        let n_nodes = read_len(r, "node", CAP)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let tag = r.read_u8()?;
            let node = match tag {
                0 => Node::Leaf { offset: r.read_u32::<LE>()? },
                1 => Node::Numeric {
                    feature: r.read_u32::<LE>()?,
                    threshold: r.read_f64::<LE>()?,
                    left: r.read_u32::<LE>()?,
                    right: r.read_u32::<LE>()?,
                },
                2 => {
                    let feature = r.read_u32::<LE>()?;
                    let words = read_len(r, "bitset word", CAP)?;
                    let left_set = (0..words).map(|_| r.read_u64::<LE>()).collect::<io::Result<_>>()?;
                    Node::Categorical { feature, left_set, left: r.read_u32::<LE>()?, right: r.read_u32::<LE>()? }
                }
                _ => return Err(invalid(format!("bad node tag {tag}"))),
            };
            nodes.push(node);
        }
        let n_values = read_len(r, "leaf value", CAP)?;
        let leaf_values = (0..n_values).map(|_| r.read_f64::<LE>()).collect::<io::Result<Vec<_>>>()?;
        let tree = Tree { nodes, leaf_values, n_outputs };
        validate_tree(&tree, &kinds)?;
        trees.push(tree);
    }
    Ok(Forest { mode, kinds, fallback_levels, trees, tree_seeds, n_train, resolved, oob: None })
}

fn validate_tree(tree: &Tree, kinds: &[FeatureKind]) -> io::Result<()> {
    if tree.nodes.is_empty() {
        return Err(invalid("empty tree"));
    }
    let n = tree.nodes.len() as u32;
    for (id, node) in tree.nodes.iter().enumerate() {
        let ok = match node {
            Node::Leaf { offset } => (*offset as usize + tree.n_outputs) <= tree.leaf_values.len(),
            Node::Numeric { feature, left, right, .. } => {
                matches!(kinds.get(*feature as usize), Some(FeatureKind::Numeric))
                    && *left > id as u32
                    && *right > id as u32
                    && *left < n
                    && *right < n
            }
            Node::Categorical { feature, left, right, .. } => {
                matches!(kinds.get(*feature as usize), Some(FeatureKind::Categorical { .. }))
                    && *left > id as u32
                    && *right > id as u32
                    && *left < n
                    && *right < n
            }
        };
        if !ok {
            return Err(invalid(format!("malformed node {id}")));
        }
    }
    Ok(())
}
