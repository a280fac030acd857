//! Event-driven simulation of a compiled pipeline.
//!
//! Stages are processes that fire when their input window is available, the
//! link to their consumer has a free slot and their parameter fill is over.
//! A firing reads its window, computes one output slice with the same
//! integer kernels as the reference interpreter and completes after the
//! stage's cycle cost, at which point the slice becomes visible downstream
//! and input slices that are no longer needed are released.

use std::collections::VecDeque;
use std::fmt::Write;

use crate::accel::design::{AcceleratorDesign, LayerSchedule, LinkPlan, StageOp};
use crate::error::{Error, Result};
use crate::quant::IntSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Longest stretch of cycles without a completed firing before the run
    /// is declared stalled; `None` derives a bound from the design.
    pub watchdog: Option<u64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { watchdog: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSpan {
    pub start: u64,
    pub end: u64,
    pub firings: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResult {
    pub logits: Vec<i32>,
    /// Time the last output slice reached the output register.
    pub cycles: u64,
    pub stages: Vec<StageSpan>,
    /// Largest number of slices ever held by each stage's output link.
    pub peak_occupancy: Vec<usize>,
}

struct Link {
    rows: VecDeque<Vec<i32>>,
    /// Absolute index of `rows[0]`.
    base: usize,
    produced: usize,
    reserved: usize,
    capacity: usize,
    gated: bool,
    done: bool,
    peak: usize,
}

impl Link {
    fn new(plan: LinkPlan, len: usize) -> Self {
        let capacity = match plan {
            LinkPlan::Full => len.max(1),
            LinkPlan::PingPong => 1,
        };
        Link {
            rows: VecDeque::new(),
            base: 0,
            produced: 0,
            reserved: 0,
            capacity,
            gated: plan == LinkPlan::Full,
            done: false,
            peak: 0,
        }
    }

    fn release_before(&mut self, index: usize) {
        while self.base < index && !self.rows.is_empty() {
            self.rows.pop_front();
            self.base += 1;
        }
    }
}

struct Proc {
    next: usize,
    fill_started: Option<u64>,
    busy: Option<(u64, Vec<i32>)>,
    gap_sums: Vec<i64>,
    span: StageSpan,
}

pub fn simulate(design: &AcceleratorDesign, x: &IntSeq) -> Result<SimResult> {
    simulate_with(design, x, SimOptions::default())
}

pub fn simulate_with(design: &AcceleratorDesign, x: &IntSeq, opts: SimOptions) -> Result<SimResult> {
    design.validate()?;
    if x.len != design.input_len || x.ch != design.input_ch || x.data.len() != x.len * x.ch {
        return Err(Error::Shape(format!(
            "input is {}x{}, design expects {}x{}",
            x.len, x.ch, design.input_len, design.input_ch
        )));
    }
    let (lo, hi) = (design.input_qp.qmin(), design.input_qp.qmax());
    if let Some(v) = x.data.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(Error::Range(format!("input value {v} outside [{lo}, {hi}]")));
    }
    let stages = &design.stages;
    let n = stages.len();
    if n == 0 {
        return Ok(SimResult { logits: x.data.clone(), cycles: 0, stages: vec![], peak_occupancy: vec![] });
    }

    let mut links: Vec<Link> = Vec::with_capacity(n + 1);
    let mut input = Link::new(LinkPlan::Full, x.len);
    input.rows = (0..x.len).map(|t| x.row(t).to_vec()).collect();
    input.produced = x.len;
    input.done = true;
    links.push(input);
    for s in stages {
        links.push(Link::new(s.output, s.out_len));
    }
    let mut procs: Vec<Proc> = stages
        .iter()
        .map(|s| Proc {
            next: 0,
            fill_started: None,
            busy: None,
            gap_sums: vec![0; s.in_ch],
            span: StageSpan { start: 0, end: 0, firings: 0 },
        })
        .collect();

    let watchdog = opts.watchdog.unwrap_or_else(|| {
        stages.iter().map(|s| s.fill_cycles.saturating_add(s.cycles_per_output)).max().unwrap_or(0).saturating_add(1)
    });
    let mut now = 0u64;
    let mut last_progress = 0u64;
    loop {
        // completions first, so freed slots and new slices are visible to
        // firings decided in the same cycle
        for i in 0..n {
            if matches!(procs[i].busy, Some((end, _)) if end == now) {
                let (_, row) = procs[i].busy.take().unwrap_or_default();
                complete(&stages[i], &mut procs[i], &mut links, i, row, now);
                last_progress = now;
            }
        }
        loop {
            let mut fired = false;
            for i in 0..n {
                fired |= try_fire(&stages[i], &mut procs[i], &mut links, i, now);
            }
            if !fired {
                break;
            }
        }
        if links[n].done {
            break;
        }
        let next_event = procs
            .iter()
            .zip(stages)
            .filter_map(|(p, s)| match (&p.busy, p.fill_started) {
                (Some((end, _)), _) => Some(*end),
                (None, Some(t0)) if t0 + s.fill_cycles > now => Some(t0 + s.fill_cycles),
                _ => None,
            })
            .min();
        let Some(next) = next_event else {
            return Err(stall(stages, &procs, &links, now, "no stage can make progress".into()));
        };
        if next - last_progress > watchdog {
            return Err(stall(stages, &procs, &links, now, format!("no firing completed within {watchdog} cycles")));
        }
        now = next;
    }

    let logits = links[n].rows.iter().flatten().copied().collect();
    Ok(SimResult {
        logits,
        cycles: now,
        stages: procs.into_iter().map(|p| p.span).collect(),
        peak_occupancy: links[1..].iter().map(|l| l.peak).collect(),
    })
}

fn try_fire(s: &LayerSchedule, p: &mut Proc, links: &mut [Link], i: usize, now: u64) -> bool {
    if p.busy.is_some() || p.next >= s.out_len {
        return false;
    }
    let (window, step) = (s.window(), s.step());
    let first = p.next * step;
    {
        let input = &links[i];
        if (input.gated && !input.done) || input.produced < first + window {
            return false;
        }
    }
    let t0 = *p.fill_started.get_or_insert(now);
    if now < t0 + s.fill_cycles {
        return false;
    }
    {
        let out = &links[i + 1];
        if out.rows.len() + out.reserved >= out.capacity {
            return false;
        }
    }
    if p.span.firings == 0 {
        p.span.start = t0;
    }
    let input = &links[i];
    let rows: Vec<&[i32]> = (first..first + window).map(|t| input.rows[t - input.base].as_slice()).collect();
    let row = fire(s, p, &rows);
    links[i + 1].reserved += 1;
    p.busy = Some((now + s.cycles_per_output, row));
    true
}

fn fire(s: &LayerSchedule, p: &mut Proc, rows: &[&[i32]]) -> Vec<i32> {
    let mut out = vec![0; s.out_ch];
    match &s.op {
        StageOp::Mac(m) => {
            let flat: Vec<i32> = rows.concat();
            m.compute(&flat, &mut out);
        }
        StageOp::MaxPool { .. } => {
            for (c, o) in out.iter_mut().enumerate() {
                *o = rows.iter().map(|r| r[c]).max().unwrap_or(i32::MIN);
            }
        }
        StageOp::Gap(g) => {
            p.gap_sums.iter_mut().for_each(|v| *v = 0);
            for r in rows {
                g.accumulate(r, &mut p.gap_sums);
            }
            g.finish(&p.gap_sums, &mut out);
        }
        StageOp::PassThrough => out.copy_from_slice(rows[0]),
    }
    out
}

fn complete(s: &LayerSchedule, p: &mut Proc, links: &mut [Link], i: usize, row: Vec<i32>, now: u64) {
    let out = &mut links[i + 1];
    out.reserved -= 1;
    out.rows.push_back(row);
    out.produced += 1;
    out.peak = out.peak.max(out.rows.len());
    p.next += 1;
    p.span.firings += 1;
    p.span.end = now;
    if p.next == s.out_len {
        out.done = true;
    }
    links[i].release_before(p.next * s.step());
}

fn stall(stages: &[LayerSchedule], procs: &[Proc], links: &[Link], cycle: u64, reason: String) -> Error {
    let mut trace = String::new();
    for (i, (s, p)) in stages.iter().zip(procs).enumerate() {
        let input = &links[i];
        let out = &links[i + 1];
        let state = if p.busy.is_some() {
            "busy".to_string()
        } else if p.next == s.out_len {
            "done".to_string()
        } else if input.produced < p.next * s.step() + s.window() {
            format!("waiting for input slice {} (have {})", p.next * s.step() + s.window() - 1, input.produced)
        } else if input.gated && !input.done {
            "waiting for upstream to finish".to_string()
        } else if out.rows.len() + out.reserved >= out.capacity {
            format!("output link full ({} of {})", out.rows.len() + out.reserved, out.capacity)
        } else {
            "filling".to_string()
        };
        let _ = writeln!(trace, "  stage {i} {}: {}/{} outputs, {state}", s.op.name(), p.next, s.out_len);
    }
    Error::Deadlock { cycle, reason, trace }
}
