//! Gated graph network, gated-sum readout and action heads.
//!
//! Every forward pass is batched: a slice of graphs is laid out as one block
//! of node rows, so the prefix states of a molecule (or a set of lockstep
//! sampling episodes) share each matrix product.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var, ZERO_ROW};
use super::tensor::Tensor;
use super::{NetConfig, NetError};
use crate::actions::{ActionLayout, Apd};
use crate::chem::{AtomVocabulary, MolecularGraph};

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct Gru {
    wz: ParamId,
    uz: ParamId,
    bz: ParamId,
    wr: ParamId,
    ur: ParamId,
    br: ParamId,
    wh: ParamId,
    uh: ParamId,
    bh: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    node_w: ParamId,
    emb_w: ParamId,
    bias: ParamId,
    rest: Vec<Linear>,
}

#[derive(Debug, Clone, PartialEq)]
struct Arch {
    embed: ParamId,
    seed: ParamId,
    messages: Vec<Vec<Linear>>,
    gru: Gru,
    gate: Linear,
    transform: Linear,
    add: Head,
    conn: Head,
    term: Linear,
}

/// Parameters of the generator together with the dimensions that shape them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: NetConfig,
    pub vocab: AtomVocabulary,
    pub store: ParamStore,
    arch: Arch,
}

impl ModelParams {
    /// Fresh uniform initialization from `seed`.
    pub fn init(config: NetConfig, vocab: AtomVocabulary, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let arch = build_arch(&config, &vocab, &mut |name, rows, cols, fan_in| {
            Ok(store.insert_uniform(name, rows, cols, fan_in, &mut rng))
        })?;
        Ok(Self {
            config,
            vocab,
            store,
            arch,
        })
    }

    /// Adopts loaded arrays after checking every name and shape.
    pub fn from_store(
        config: NetConfig,
        vocab: AtomVocabulary,
        store: ParamStore,
    ) -> Result<Self, NetError> {
        config.validate()?;
        let arch = build_arch(&config, &vocab, &mut |name, rows, cols, _| {
            let id = store
                .id(name)
                .ok_or_else(|| NetError::ShapeMismatch(format!("missing array {name}")))?;
            if store.get(id).shape != [rows, cols] {
                return Err(NetError::ShapeMismatch(format!(
                    "{name}: expected {rows}x{cols}, found {:?}",
                    store.get(id).shape
                )));
            }
            Ok(id)
        })?;
        if store.len() != count_arrays(&config, &vocab) {
            return Err(NetError::ShapeMismatch("unexpected extra arrays".into()));
        }
        Ok(Self {
            config,
            vocab,
            store,
            arch,
        })
    }

    pub fn layout(&self) -> ActionLayout {
        ActionLayout::from_vocab(&self.vocab)
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.store.id(name)
    }
}

fn count_arrays(config: &NetConfig, vocab: &AtomVocabulary) -> usize {
    let mut n = 0;
    build_arch(config, vocab, &mut |_, _, _, _| {
        n += 1;
        Ok(ParamId(n - 1))
    })
    .expect("counting never fails");
    n
}

type Alloc<'a> = dyn FnMut(&str, usize, usize, usize) -> Result<ParamId, NetError> + 'a;

fn linear(alloc: &mut Alloc, name: &str, fan_in: usize, out: usize) -> Result<Linear, NetError> {
    Ok(Linear {
        w: alloc(&format!("{name}.w"), fan_in, out, fan_in)?,
        b: alloc(&format!("{name}.b"), 1, out, fan_in)?,
    })
}

/// Layers `first..` of a dense stack over consecutive `sizes`.
fn stack(alloc: &mut Alloc, prefix: &str, sizes: &[usize], first: usize) -> Result<Vec<Linear>, NetError> {
    sizes
        .windows(2)
        .enumerate()
        .skip(first)
        .map(|(l, pair)| linear(alloc, &format!("{prefix}.{l}"), pair[0], pair[1]))
        .collect()
}

/// An action head whose first layer is split into a node block (`.0.w`) and a
/// graph-embedding block (`.0.e`) so the embedding product runs once per graph.
fn head(alloc: &mut Alloc, prefix: &str, config: &NetConfig, out: usize) -> Result<Head, NetError> {
    let (w, h, hid) = (config.width, config.hidden_dim, config.mlp_hidden);
    let mut sizes = vec![w + h];
    sizes.extend(std::iter::repeat(hid).take(config.mlp_depth - 1));
    sizes.push(out);
    let fan_in = w + h;
    Ok(Head {
        node_w: alloc(&format!("{prefix}.0.w"), w, sizes[1], fan_in)?,
        emb_w: alloc(&format!("{prefix}.0.e"), h, sizes[1], fan_in)?,
        bias: alloc(&format!("{prefix}.0.b"), 1, sizes[1], fan_in)?,
        rest: stack(alloc, prefix, &sizes, 1)?,
    })
}

fn build_arch(config: &NetConfig, vocab: &AtomVocabulary, alloc: &mut Alloc) -> Result<Arch, NetError> {
    let w = config.width;
    let m = config.message_size;
    let h = config.hidden_dim;
    let f = vocab.feature_dim();
    let bonds = vocab.bond_orders.len();
    let layout = ActionLayout::from_vocab(vocab);

    let mut messages = Vec::with_capacity(bonds);
    for b in 0..bonds {
        let mut sizes = vec![w];
        sizes.extend(std::iter::repeat(m).take(config.message_passing_layers));
        messages.push(stack(alloc, &format!("msg.{b}"), &sizes, 0)?);
    }
    let add = head(alloc, "add", config, layout.add_width())?;
    let conn = head(alloc, "conn", config, bonds)?;
    let gate = linear(alloc, "readout.gate", 2 * w, h)?;
    let transform = linear(alloc, "readout.transform", w, h)?;
    let term = linear(alloc, "term", h, 1)?;

    let embed = alloc("embed.w", f, w, f)?;
    let seed = alloc("seed", 1, w, 1)?;
    let gru = Gru {
        wz: alloc("gru.wz", m, w, m)?,
        uz: alloc("gru.uz", w, w, w)?,
        bz: alloc("gru.bz", 1, w, w)?,
        wr: alloc("gru.wr", m, w, m)?,
        ur: alloc("gru.ur", w, w, w)?,
        br: alloc("gru.br", 1, w, w)?,
        wh: alloc("gru.wh", m, w, m)?,
        uh: alloc("gru.uh", w, w, w)?,
        bh: alloc("gru.bh", 1, w, w)?,
    };
    Ok(Arch {
        embed,
        seed,
        messages,
        gru,
        gate,
        transform,
        add,
        conn,
        term,
    })
}

fn apply_linear(t: &mut Tape, x: Var, l: &Linear) -> Var {
    let w = t.param(l.w);
    let b = t.param(l.b);
    let y = t.matmul(x, w);
    t.add_bias(y, b)
}

/// Dense stack with SELU between layers and a linear output.
fn apply_stack(t: &mut Tape, mut x: Var, layers: &[Linear]) -> Var {
    for (i, l) in layers.iter().enumerate() {
        x = apply_linear(t, x, l);
        if i + 1 < layers.len() {
            x = t.selu(x);
        }
    }
    x
}

/// `[node ⊕ embedding]` rows through a head; `graph_idx` maps rows to graphs.
fn apply_head(t: &mut Tape, nodes: Var, embedding: Var, graph_idx: &[usize], head: &Head) -> Var {
    let (nw, ew, b) = (t.param(head.node_w), t.param(head.emb_w), t.param(head.bias));
    let from_nodes = t.matmul(nodes, nw);
    let per_graph = t.matmul(embedding, ew);
    let from_graph = t.gather_rows(per_graph, graph_idx.to_vec());
    let sum = t.add(from_nodes, from_graph);
    let x = t.add_bias(sum, b);
    let x = t.selu(x);
    apply_stack(t, x, &head.rest)
}

/// Row layout of a batch of graphs.
struct Batch {
    /// First node row of each graph.
    offsets: Vec<usize>,
    /// Real atom count of each graph (0 for the empty graph).
    atoms: Vec<usize>,
    total_rows: usize,
}

impl Batch {
    fn new(graphs: &[&MolecularGraph]) -> Self {
        let mut offsets = Vec::with_capacity(graphs.len());
        let mut atoms = Vec::with_capacity(graphs.len());
        let mut total = 0;
        for g in graphs {
            offsets.push(total);
            atoms.push(g.atom_count());
            total += g.atom_count().max(1);
        }
        Self {
            offsets,
            atoms,
            total_rows: total,
        }
    }
}

struct Propagated {
    states: Var,
    embedding: Var,
}

fn propagate(t: &mut Tape, p: &ModelParams, graphs: &[&MolecularGraph], batch: &Batch) -> Result<Propagated, NetError> {
    let vocab = &p.vocab;
    let f = vocab.feature_dim();
    let n_el = vocab.elements.len();
    let rows = batch.total_rows;
    let mut features = vec![0.0; rows * f];
    let mut seed_col = vec![0.0; rows];
    let n_bonds = vocab.bond_orders.len();
    let mut src: Vec<Vec<usize>> = vec![Vec::new(); n_bonds];
    let mut dst: Vec<Vec<usize>> = vec![Vec::new(); n_bonds];
    let mut node_graph = Vec::with_capacity(rows);

    for (k, g) in graphs.iter().enumerate() {
        let off = batch.offsets[k];
        if g.is_empty() {
            seed_col[off] = 1.0;
            node_graph.push(k);
            continue;
        }
        for (i, a) in g.atoms().iter().enumerate() {
            let e = vocab
                .element_index(a.element)
                .ok_or_else(|| NetError::OutOfVocabulary(a.element.symbol().to_string()))?;
            let c = vocab
                .charge_index(a.formal_charge)
                .ok_or_else(|| NetError::OutOfVocabulary(format!("charge {}", a.formal_charge)))?;
            features[(off + i) * f + e] = 1.0;
            features[(off + i) * f + n_el + c] = 1.0;
            node_graph.push(k);
        }
        for ((i, j), order) in g.bonds() {
            let b = vocab
                .bond_index(order)
                .ok_or_else(|| NetError::OutOfVocabulary(format!("bond {}", order.as_u8())))?;
            src[b].extend([off + i, off + j]);
            dst[b].extend([off + j, off + i]);
        }
    }

    let arch = &p.arch;
    let x = t.constant(Tensor::from_rows(rows, f, features));
    let s = t.constant(Tensor::from_rows(rows, 1, seed_col));
    let embed = t.param(arch.embed);
    let seed = t.param(arch.seed);
    let xe = t.matmul(x, embed);
    let se = t.matmul(s, seed);
    let h0 = t.add(xe, se);

    let m = p.config.message_size;
    let gru = &arch.gru;
    let mut h = h0;
    for _ in 0..p.config.ggnn_depth {
        let mut agg: Option<Var> = None;
        for b in 0..n_bonds {
            if src[b].is_empty() {
                continue;
            }
            let hs = t.gather_rows(h, src[b].clone());
            let msg = apply_stack(t, hs, &arch.messages[b]);
            let summed = t.segment_sum(msg, dst[b].clone(), rows);
            agg = Some(match agg {
                Some(a) => t.add(a, summed),
                None => summed,
            });
        }
        let a = match agg {
            Some(a) => a,
            None => t.constant(Tensor::zeros(rows, m)),
        };
        let gate = |t: &mut Tape, w: ParamId, u: ParamId, b: ParamId, hin: Var| {
            let (w, u, b) = (t.param(w), t.param(u), t.param(b));
            let x1 = t.matmul(a, w);
            let x2 = t.matmul(hin, u);
            let s = t.add(x1, x2);
            t.add_bias(s, b)
        };
        let zl = gate(t, gru.wz, gru.uz, gru.bz, h);
        let z = t.sigmoid(zl);
        let rl = gate(t, gru.wr, gru.ur, gru.br, h);
        let r = t.sigmoid(rl);
        let rh = t.mul(r, h);
        let cl = gate(t, gru.wh, gru.uh, gru.bh, rh);
        let cand = t.tanh(cl);
        let keep = t.one_minus(z);
        let old = t.mul(keep, h);
        let new = t.mul(z, cand);
        h = t.add(old, new);
    }

    let both = t.concat_cols(h, h0);
    let gl = apply_linear(t, both, &arch.gate);
    let g = t.sigmoid(gl);
    let tr = apply_linear(t, h, &arch.transform);
    let gated = t.mul(g, tr);
    let embedding = t.segment_sum(gated, node_graph, graphs.len());
    Ok(Propagated { states: h, embedding })
}

/// `G x S` log-probabilities over every action slot, one row per graph.
pub fn log_probs_batch(t: &mut Tape, p: &ModelParams, graphs: &[&MolecularGraph]) -> Result<Var, NetError> {
    let batch = Batch::new(graphs);
    let prop = propagate(t, p, graphs, &batch)?;
    let layout = p.layout();

    // head input rows: each node (the seed node for the empty graph), then
    // one shared pad row per graph for attach slots beyond it
    let mut node_idx = Vec::new();
    let mut graph_idx = Vec::new();
    let mut first_row = Vec::with_capacity(graphs.len());
    let mut pad_row = Vec::with_capacity(graphs.len());
    let heads: Vec<usize> = batch.atoms.iter().map(|&a| a.max(1)).collect();
    for k in 0..graphs.len() {
        first_row.push(node_idx.len());
        for i in 0..heads[k] {
            node_idx.push(batch.offsets[k] + i);
            graph_idx.push(k);
        }
        if heads[k] < layout.max_nodes {
            pad_row.push(node_idx.len());
            node_idx.push(ZERO_ROW);
            graph_idx.push(k);
        } else {
            pad_row.push(ZERO_ROW);
        }
    }
    let rows = node_idx.len();
    let nodes = t.gather_rows(prop.states, node_idx);
    let add = apply_head(t, nodes, prop.embedding, &graph_idx, &p.arch.add);
    let conn = apply_head(t, nodes, prop.embedding, &graph_idx, &p.arch.conn);
    let term = apply_linear(t, prop.embedding, &p.arch.term);
    let flat = t.concat_flat(vec![add, conn, term]);

    let aw = layout.add_width();
    let nb = layout.n_bonds;
    let conn_off = rows * aw;
    let term_off = conn_off + rows * nb;
    let total = layout.total();
    let mut idx = Vec::with_capacity(graphs.len() * total);
    for k in 0..graphs.len() {
        let row_of = |node: usize| {
            if node < heads[k] {
                first_row[k] + node
            } else {
                pad_row[k]
            }
        };
        for node in 0..layout.max_nodes {
            let r = row_of(node);
            idx.extend((0..aw).map(|c| r * aw + c));
        }
        for node in 0..layout.max_nodes {
            let r = row_of(node);
            idx.extend((0..nb).map(|c| conn_off + r * nb + c));
        }
        idx.push(term_off + k);
    }
    let logits = t.gather_flat(flat, idx, graphs.len(), total);
    Ok(t.log_softmax_rows(logits))
}

/// Log-probability of `targets[k]` under graph `k`'s distribution, `G x 1`.
pub fn chosen_log_probs(
    t: &mut Tape,
    p: &ModelParams,
    graphs: &[&MolecularGraph],
    targets: &[usize],
) -> Result<Var, NetError> {
    assert_eq!(graphs.len(), targets.len());
    let lp = log_probs_batch(t, p, graphs)?;
    let total = p.layout().total();
    let idx = targets
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            assert!(s < total, "target slot out of range");
            k * total + s
        })
        .collect();
    Ok(t.gather_flat(lp, idx, graphs.len(), 1))
}

/// Node states after propagation, one row per atom.
pub fn ggnn_forward(g: &MolecularGraph, p: &ModelParams) -> Result<Tensor, NetError> {
    if g.is_empty() {
        return Err(NetError::EmptyGraph);
    }
    let mut t = Tape::new(&p.store);
    let graphs = [g];
    let batch = Batch::new(&graphs);
    let prop = propagate(&mut t, p, &graphs, &batch)?;
    Ok(t.value(prop.states).clone())
}

/// Action distributions for several graphs at once.
pub fn apd_forward_batch(graphs: &[&MolecularGraph], p: &ModelParams) -> Result<Vec<Apd>, NetError> {
    if graphs.is_empty() {
        return Ok(Vec::new());
    }
    let mut t = Tape::new(&p.store);
    let lp = log_probs_batch(&mut t, p, graphs)?;
    let layout = p.layout();
    let values = t.value(lp);
    Ok((0..graphs.len())
        .map(|k| Apd::from_log_probs(layout, values.row(k)))
        .collect())
}

pub fn apd_forward(g: &MolecularGraph, p: &ModelParams) -> Result<Apd, NetError> {
    Ok(apd_forward_batch(&[g], p)?.pop().expect("one graph"))
}

/// Row-wise log-probabilities without building an [`Apd`].
pub fn log_probs(graphs: &[&MolecularGraph], p: &ModelParams) -> Result<Tensor, NetError> {
    let mut t = Tape::new(&p.store);
    let lp = log_probs_batch(&mut t, p, graphs)?;
    Ok(t.value(lp).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    pub(crate) fn micro_config() -> NetConfig {
        NetConfig {
            width: 8,
            hidden_dim: 16,
            message_size: 8,
            mlp_hidden: 16,
            ..NetConfig::default()
        }
    }

    fn vocab_for(smiles: &[&str], max_nodes: Option<usize>) -> AtomVocabulary {
        let gs: Vec<_> = smiles.iter().map(|s| parse_smiles(s).unwrap()).collect();
        AtomVocabulary::from_graphs(&gs, max_nodes)
    }

    #[test]
    fn array_names_and_shapes() {
        let v = vocab_for(&["CCO", "C=O"], Some(5));
        let p = ModelParams::init(NetConfig::default(), v, 0).unwrap();
        let shape = |n: &str| p.store.get(p.param_id(n).unwrap()).shape.clone();
        assert_eq!(shape("embed.w"), vec![3, 100]);
        assert_eq!(shape("msg.2.2.w"), vec![100, 100]);
        assert_eq!(shape("add.0.w"), vec![100, 500]);
        assert_eq!(shape("add.0.e"), vec![250, 500]);
        assert_eq!(shape("add.3.w"), vec![500, 2 * 3]);
        assert_eq!(shape("conn.3.b"), vec![1, 3]);
        assert_eq!(shape("readout.gate.w"), vec![200, 250]);
        assert_eq!(shape("term.w"), vec![250, 1]);
        assert!(p.param_id("add.4.w").is_none());
        let rebuilt = ModelParams::from_store(p.config.clone(), p.vocab.clone(), p.store.clone()).unwrap();
        assert_eq!(rebuilt, p);
    }

    #[test]
    fn uniform_init_bounds() {
        let v = vocab_for(&["CCO"], None);
        let p = ModelParams::init(micro_config(), v, 3).unwrap();
        for (_, name, t) in p.store.iter() {
            if name.ends_with(".b") || name.starts_with("gru.b") {
                continue;
            }
            let bound = 1.0 / (t.rows() as f64).sqrt();
            assert!(t.data.iter().all(|x| x.abs() <= bound), "{name}");
        }
    }

    #[test]
    fn batched_rows_match_single_passes() {
        let v = vocab_for(&["CC(=O)OC", "C#N"], Some(6));
        let p = ModelParams::init(micro_config(), v, 11).unwrap();
        let gs: Vec<MolecularGraph> = vec![
            MolecularGraph::new(),
            parse_smiles("CC=O").unwrap(),
            parse_smiles("C#N").unwrap(),
            parse_smiles("CC(=O)OC").unwrap(),
        ];
        let refs: Vec<&MolecularGraph> = gs.iter().collect();
        let joint = log_probs(&refs, &p).unwrap();
        for (k, g) in gs.iter().enumerate() {
            let single = log_probs(&[g], &p).unwrap();
            for (a, b) in joint.row(k).iter().zip(single.row(0)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_atom_states_have_width_columns() {
        let v = vocab_for(&["CO"], None);
        let p = ModelParams::init(micro_config(), v, 1).unwrap();
        let g = parse_smiles("C").unwrap();
        let h = ggnn_forward(&g, &p).unwrap();
        assert_eq!(h.shape, vec![1, 8]);
        assert!(matches!(ggnn_forward(&MolecularGraph::new(), &p), Err(NetError::EmptyGraph)));
    }

    #[test]
    fn empty_graph_apd_is_normalized() {
        let v = vocab_for(&["CO"], Some(3));
        let p = ModelParams::init(micro_config(), v, 1).unwrap();
        let apd = apd_forward(&MolecularGraph::new(), &p).unwrap();
        assert!((apd.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(apd.probs.len(), p.layout().total());
    }
}
