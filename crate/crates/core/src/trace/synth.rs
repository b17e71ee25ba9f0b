use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{TraceError, TraceEvent};
use crate::analytics::FittedModel;
use crate::message::compose_forward_text;
use crate::time::Timestamp;
use crate::topology::Topology;

/// Draws `n_roots` updates uniformly over `window`, each followed by a single
/// forwarding chain whose length and per-hop delays come from `model`.
/// Each hop's forwarder follows the previous author when anyone does.
pub fn synth_trace(
    model: &FittedModel,
    n_roots: usize,
    window: (Timestamp, Timestamp),
    topology: &Topology,
    seed: u64,
) -> Result<Vec<TraceEvent>, TraceError> {
    model.validate().map_err(|e| TraceError::InvalidModel(e.to_string()))?;
    let (t0, t1) = window;
    if t0 > t1 {
        return Err(TraceError::InvalidWindow(t0, t1));
    }
    if n_roots == 0 {
        return Ok(Vec::new());
    }
    if topology.is_empty() {
        return Err(TraceError::EmptyTopology);
    }
    let followers = topology.followers();
    let delays = model.delay_law();
    let lengths = model.length_law();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = topology.len();
    let mut out = Vec::new();
    for r in 0..n_roots {
        let t = Timestamp(rng.gen_range(t0.millis()..=t1.millis()));
        let mut author = rng.gen_range(0..n);
        let mid = format!("s{r:06}");
        let user = &topology.users[author];
        let text = format!("status {r}");
        out.push(TraceEvent::update(&mid, &user.uid, &user.uname, t, &text));
        let (mut parent_mid, mut parent_t, mut parent_text) = (mid.clone(), t, text);
        let hops = lengths.sample(&mut rng);
        for k in 1..=hops {
            let next = match followers[author].as_slice() {
                [] if n > 1 => {
                    let j = rng.gen_range(0..n - 1);
                    if j >= author {
                        j + 1
                    } else {
                        j
                    }
                }
                [] => break,
                fs => fs[rng.gen_range(0..fs.len())],
            };
            let delay_ms = (delays.sample(&mut rng) * 1000.0).round() as i64;
            let t = parent_t + delay_ms;
            let text = compose_forward_text(&topology.users[author].uname, &parent_text, None);
            let fwd_mid = format!("{mid}.{k}");
            let user = &topology.users[next];
            out.push(TraceEvent::forward(&fwd_mid, &parent_mid, &user.uid, &user.uname, t, &text));
            author = next;
            parent_mid = fwd_mid;
            parent_t = t;
            parent_text = text;
        }
    }
    out.sort_by(|a, b| a.t.cmp(&b.t).then_with(|| a.mid.cmp(&b.mid)));
    Ok(out)
}
