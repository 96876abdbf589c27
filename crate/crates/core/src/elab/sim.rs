//! Cycle-based two-state simulation of a flattened design.
//!
//! One call to [`Simulator::sample`] produces the valuation a clocked
//! property observes at a clock edge: state plus inputs, combinational logic
//! settled, and active asynchronous controls already applied. All clocks
//! tick together.

use crate::elab::eval::{Evaluator, Exec};
use crate::elab::{FlatDesign, ProcessKind, SigId};
use crate::rtl::ast::mask;

pub struct Simulator<'a> {
    pub design: &'a FlatDesign,
    ev: Evaluator<'a>,
    pub state_slots: Vec<usize>,
    pub inputs: Vec<SigId>,
    comb: Vec<usize>,
    seq: Vec<usize>,
}

impl<'a> Simulator<'a> {
    pub fn new(design: &'a FlatDesign) -> Self {
        let comb = match &design.comb_order {
            Some(o) => o.clone(),
            None => (0..design.processes.len()).filter(|i| design.processes[*i].kind == ProcessKind::Comb).collect(),
        };
        let seq = (0..design.processes.len()).filter(|i| matches!(design.processes[*i].kind, ProcessKind::Seq { .. })).collect();
        Simulator { design, ev: Evaluator::new(&design.signals), state_slots: design.state_slots(), inputs: design.free_inputs(), comb, seq }
    }

    pub fn evaluator(&self) -> Evaluator<'a> {
        self.ev
    }

    /// Total free input bits per cycle.
    pub fn input_bits(&self) -> u32 {
        self.inputs.iter().map(|i| self.design.signals[*i].width).sum()
    }

    pub fn zero_state(&self) -> Vec<u64> {
        vec![0; self.state_slots.len()]
    }

    /// Splits a packed input word (first input in the low bits) per input.
    pub fn unpack_inputs(&self, mut packed: u128) -> Vec<u64> {
        self.inputs
            .iter()
            .map(|i| {
                let w = self.design.signals[*i].width;
                let v = (packed as u64) & mask(w);
                packed = if w >= 128 { 0 } else { packed >> w };
                v
            })
            .collect()
    }

    fn settle(&self, vals: &mut Vec<u64>) {
        let passes = if self.design.comb_order.is_some() { 1 } else { self.comb.len() + 1 };
        for _ in 0..passes {
            let before = if passes > 1 { Some(vals.clone()) } else { None };
            for &pi in &self.comb {
                let mut ex = Exec::new(self.ev, vals, true);
                ex.run(&self.design.processes[pi].body);
            }
            if before.as_ref() == Some(vals) {
                break;
            }
        }
    }

    /// Full slot valuation for one cycle.
    pub fn sample(&self, state: &[u64], inputs: &[u64]) -> Vec<u64> {
        let mut vals = vec![0u64; self.design.slot_count];
        for (k, &slot) in self.state_slots.iter().enumerate() {
            vals[slot] = state[k];
        }
        for (k, &sig) in self.inputs.iter().enumerate() {
            let s = &self.design.signals[sig];
            vals[s.slot] = inputs.get(k).copied().unwrap_or(0) & mask(s.width);
        }
        self.settle(&mut vals);
        // Asynchronous controls act immediately; repeat until no block fires anew.
        let mut fired = vec![false; self.seq.len()];
        loop {
            let mut changed = false;
            for (k, &pi) in self.seq.iter().enumerate() {
                if fired[k] {
                    continue;
                }
                let ProcessKind::Seq { asyncs, .. } = &self.design.processes[pi].kind else { unreachable!() };
                let active = asyncs.iter().any(|a| {
                    let v = vals[self.design.signals[a.sig].slot] & 1;
                    (v == 1) == a.active_high
                });
                if active {
                    let mut ex = Exec::new(self.ev, &mut vals, true);
                    ex.run(&self.design.processes[pi].body);
                    fired[k] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            self.settle(&mut vals);
        }
        vals
    }

    /// State after the clock edge that follows `sample`.
    pub fn next_state(&self, sample: &[u64]) -> Vec<u64> {
        let mut next = sample.to_vec();
        for &pi in &self.seq {
            let p = &self.design.processes[pi];
            let mut work = sample.to_vec();
            let mut ex = Exec::new(self.ev, &mut work, false);
            ex.run(&p.body);
            ex.commit();
            for &s in &p.writes {
                let sig = &self.design.signals[s];
                for slot in sig.slot..sig.slot + sig.slots() {
                    next[slot] = work[slot];
                }
            }
        }
        self.state_slots.iter().map(|&s| next[s]).collect()
    }

    /// Extracts the state vector from a full valuation.
    pub fn state_of(&self, vals: &[u64]) -> Vec<u64> {
        self.state_slots.iter().map(|&s| vals[s]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elab::elaborate;
    use crate::rtl::parse_source;

    #[test]
    fn async_reset_acts_within_the_cycle() {
        let text = "module m(input logic clk, input logic rst_n, input logic d, output logic q);
  always_ff @(posedge clk or negedge rst_n) if (!rst_n) q <= 1'b0; else q <= d;
endmodule";
        let flat = elaborate(&parse_source(&[("m.sv", text)]).unwrap(), "m").unwrap();
        let sim = Simulator::new(&flat);
        let q = flat.signal("q").unwrap().slot;
        let order: Vec<String> = sim.inputs.iter().map(|&s| flat.signals[s].path.clone()).collect();
        let inputs = |rst_n: u64, d: u64| order.iter().map(|n| if n == "rst_n" { rst_n } else if n == "d" { d } else { 0 }).collect::<Vec<_>>();
        let state = vec![1; sim.state_of(&vec![0; flat.slot_count]).len()];
        assert_eq!(sim.sample(&state, &inputs(0, 1))[q], 0);
        let s = sim.sample(&state, &inputs(1, 0));
        assert_eq!(s[q], 1);
        let next = sim.next_state(&s);
        assert_eq!(sim.sample(&next, &inputs(1, 0))[q], 0);
    }
}
