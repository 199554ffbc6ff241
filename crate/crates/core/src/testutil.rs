use rand::Rng;

use crate::netlist::{GateType, Netlist, NetlistBuilder, NodeId};

/// Unsimplified netlist with constants, duplicates and dead gates.
pub fn random_netlist<R: Rng>(rng: &mut R, inputs: usize, gates: usize, outputs: usize) -> Netlist {
    let mut b = NetlistBuilder::raw();
    for i in 0..inputs {
        b.add_input(format!("i{i}")).unwrap();
    }
    for _ in 0..gates {
        let r = rng.gen_range(0..20);
        if r == 0 || b.is_empty() {
            b.add_gate(if rng.gen() { GateType::Const1 } else { GateType::Const0 }, &[])
                .unwrap();
            continue;
        }
        let ty = GateType::LOGIC[rng.gen_range(0..GateType::LOGIC.len())];
        let len = b.len() as NodeId;
        // bias towards recent nodes to get some depth
        let pick = |rng: &mut R| {
            if rng.gen_bool(0.6) {
                len - 1 - rng.gen_range(0..len.min(8))
            } else {
                rng.gen_range(0..len)
            }
        };
        let ops: Vec<NodeId> = (0..ty.arity()).map(|_| pick(rng)).collect();
        b.add_gate(ty, &ops).unwrap();
    }
    let len = b.len() as NodeId;
    for k in 0..outputs {
        let id = if len == 0 { 0 } else { len - 1 - rng.gen_range(0..len.min(16)) };
        if len > 0 {
            b.add_output(format!("o{k}"), id).unwrap();
        }
    }
    b.finish()
}

pub fn random_vectors<R: Rng>(rng: &mut R, width: usize, count: usize) -> Vec<Vec<bool>> {
    (0..count)
        .map(|_| (0..width).map(|_| rng.gen()).collect())
        .collect()
}
