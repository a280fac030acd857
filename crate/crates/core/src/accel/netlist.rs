//! Line-based structural description of a design.
//!
//! ```text
//! netlist 1
//! device xc7s25 luts=14600 bram_kbits=1620 bram_blocks=45 dsps=80 clock_hz=100000000.0
//! bits 8
//! cycle_model overhead=2 fill_per_param=1353
//! input 4410x4 qp=8:0.000030517578125:0:asym
//! stage 0 conv 4410x4 -> 4408x4 kernel=3 relu=1 cycles_per_output=56 fill=70252
//!   weight_qp 8:0.0123:-3:asym
//!   input_qp ...
//!   output_qp ...
//!   requant m0=1234567890 shift=35
//!   weights 1 -2 3 ...
//!   bias 10 -20 ...
//! stage 1 maxpool 4408x4 -> 2204x4 kernel=2 stride=2 cycles_per_output=16 fill=0
//! link input -> 0 full elements=17640
//! link 0 -> 1 full elements=17632
//! memory input bits=141120 bram18=8
//! rom 0 bits=0..1504
//! end
//! ```
//!
//! Links, memories and ROM ranges are derived from the stages; the parser
//! recomputes them and rejects a description that disagrees.

use std::fmt::Write;
use std::str::FromStr;

use crate::accel::design::{AcceleratorDesign, CycleParams, LayerSchedule, LinkPlan, Port, StageOp};
use crate::accel::device::DeviceProfile;
use crate::accel::resources::memories;
use crate::error::{Error, Result};
use crate::quant::{MacKind, QGap, QMac, QuantParams, Requantizer};

const HEADER: &str = "netlist 1";

fn qp_text(q: &QuantParams) -> String {
    format!("{}:{:?}:{}:{}", q.bits, q.scale, q.zero_point, if q.symmetric { "sym" } else { "asym" })
}

fn port_text(p: Port) -> String {
    match p {
        Port::Input => "input".into(),
        Port::Output => "output".into(),
        Port::Stage(i) => i.to_string(),
    }
}

fn ints(v: &[i32]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn emit_netlist(design: &AcceleratorDesign) -> String {
    let mut out = String::new();
    let d = &design.device;
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(
        out,
        "device {} luts={} bram_kbits={} bram_blocks={} dsps={} clock_hz={:?}",
        d.name, d.luts, d.bram_kbits, d.bram_blocks, d.dsps, d.clock_hz
    );
    let _ = writeln!(out, "bits {}", design.bits);
    let _ = writeln!(out, "cycle_model overhead={} fill_per_param={}", design.cycle.overhead, design.cycle.fill_per_param);
    let _ = writeln!(out, "input {}x{} qp={}", design.input_len, design.input_ch, qp_text(&design.input_qp));
    for (i, s) in design.stages.iter().enumerate() {
        let shape = format!("{}x{} -> {}x{}", s.in_len, s.in_ch, s.out_len, s.out_ch);
        let timing = format!("cycles_per_output={} fill={}", s.cycles_per_output, s.fill_cycles);
        match &s.op {
            StageOp::Mac(m) => {
                let _ = writeln!(out, "stage {i} {} {shape} kernel={} relu={} {timing}", m.kind.name(), m.kernel, m.relu as u8);
                let _ = writeln!(out, "  weight_qp {}", qp_text(&m.weight_qp));
                let _ = writeln!(out, "  input_qp {}", qp_text(&m.input_qp));
                let _ = writeln!(out, "  output_qp {}", qp_text(&m.output_qp));
                let _ = writeln!(out, "  requant m0={} shift={}", m.requant.m0, m.requant.shift);
                let _ = writeln!(out, "  weights {}", ints(&m.weights));
                let _ = writeln!(out, "  bias {}", ints(&m.bias));
            }
            StageOp::MaxPool { kernel, stride } => {
                let _ = writeln!(out, "stage {i} maxpool {shape} kernel={kernel} stride={stride} {timing}");
            }
            StageOp::Gap(g) => {
                let _ = writeln!(out, "stage {i} gap {shape} {timing}");
                let _ = writeln!(out, "  input_qp {}", qp_text(&g.input_qp));
                let _ = writeln!(out, "  output_qp {}", qp_text(&g.output_qp));
                let _ = writeln!(out, "  requant m0={} shift={}", g.requant.m0, g.requant.shift);
            }
            StageOp::PassThrough => {
                let _ = writeln!(out, "stage {i} passthrough {shape} {timing}");
            }
        }
    }
    for line in derived_lines(design) {
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "end");
    out
}

/// Handshake edges, memories and ROM map, one line each.
fn derived_lines(design: &AcceleratorDesign) -> Vec<String> {
    let mut lines = Vec::new();
    let elements = |p: Port| match p {
        Port::Stage(i) => design.stages[i].buffer_elements(),
        _ => design.input_len * design.input_ch,
    };
    for (from, to, plan) in design.handshake_edges() {
        lines.push(format!("link {} -> {} {} elements={}", port_text(from), port_text(to), plan.name(), elements(from)));
    }
    for m in memories(design) {
        lines.push(format!("memory {} bits={} bram18={}", m.name, m.bits, m.bram18));
    }
    for (i, start, end) in design.weight_map() {
        lines.push(format!("rom {i} bits={start}..{end}"));
    }
    lines
}

struct Cursor<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let last = self.lines.last().map_or(1, |l| l.0);
        let l = self.peek().ok_or(Error::Parse { line: last, reason: format!("unexpected end, expected {what}") })?;
        self.pos += 1;
        Ok(l)
    }

    /// Next line, which must start with `keyword`; returns the remaining tokens.
    fn expect(&mut self, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self.next(keyword)?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(k) if k == keyword => Ok((n, tokens.collect())),
            other => Err(perr(n, format!("expected `{keyword}`, found {:?}", other.unwrap_or("")))),
        }
    }
}

fn perr(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { line, reason: reason.into() }
}

fn num<T: FromStr>(line: usize, text: &str, what: &str) -> Result<T> {
    text.parse().map_err(|_| perr(line, format!("invalid {what} {text:?}")))
}

/// Value of `key=value` among `tokens`.
fn field<T: FromStr>(line: usize, tokens: &[&str], key: &str) -> Result<T> {
    let v = tokens
        .iter()
        .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| perr(line, format!("missing {key}=")))?;
    num(line, v, key)
}

fn dims(line: usize, text: &str) -> Result<(usize, usize)> {
    let (a, b) = text.split_once('x').ok_or_else(|| perr(line, format!("expected LENxCH, found {text:?}")))?;
    Ok((num(line, a, "length")?, num(line, b, "channel count")?))
}

fn parse_qp(line: usize, text: &str) -> Result<QuantParams> {
    let parts: Vec<&str> = text.split(':').collect();
    let [bits, scale, zp, kind] = parts[..] else {
        return Err(perr(line, format!("expected bits:scale:zero_point:sym|asym, found {text:?}")));
    };
    let symmetric = match kind {
        "sym" => true,
        "asym" => false,
        other => return Err(perr(line, format!("unknown quantization kind {other:?}"))),
    };
    let qp = QuantParams { bits: num(line, bits, "bitwidth")?, scale: num(line, scale, "scale")?, zero_point: num(line, zp, "zero point")?, symmetric };
    qp.validate().map_err(|e| perr(line, e.to_string()))?;
    Ok(qp)
}

fn parse_ints(line: usize, tokens: &[&str]) -> Result<Vec<i32>> {
    tokens.iter().map(|t| num(line, t, "integer")).collect()
}

fn qp_line(c: &mut Cursor, keyword: &str) -> Result<QuantParams> {
    let (n, t) = c.expect(keyword)?;
    match t[..] {
        [v] => parse_qp(n, v),
        _ => Err(perr(n, format!("`{keyword}` takes one value"))),
    }
}

fn requant_line(c: &mut Cursor) -> Result<Requantizer> {
    let (n, t) = c.expect("requant")?;
    let r = Requantizer { m0: field(n, &t, "m0")?, shift: field(n, &t, "shift")? };
    r.validate().map_err(|e| perr(n, e.to_string()))?;
    Ok(r)
}

pub fn parse_netlist(text: &str) -> Result<AcceleratorDesign> {
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let mut c = Cursor { lines, pos: 0 };

    let (n, header) = c.next("header")?;
    if header != HEADER {
        return Err(perr(n, format!("expected `{HEADER}`")));
    }
    let (n, t) = c.expect("device")?;
    let name = t.first().ok_or_else(|| perr(n, "missing device name"))?;
    if name.contains('=') {
        return Err(perr(n, "missing device name"));
    }
    let device = DeviceProfile {
        name: name.to_string(),
        luts: field(n, &t, "luts")?,
        bram_kbits: field(n, &t, "bram_kbits")?,
        bram_blocks: field(n, &t, "bram_blocks")?,
        dsps: field(n, &t, "dsps")?,
        clock_hz: field(n, &t, "clock_hz")?,
    };
    device.validate().map_err(|e| perr(n, e.to_string()))?;
    let (n, t) = c.expect("bits")?;
    let bits: u32 = match t[..] {
        [b] => num(n, b, "bitwidth")?,
        _ => return Err(perr(n, "`bits` takes one value")),
    };
    let (n, t) = c.expect("cycle_model")?;
    let cycle = CycleParams { overhead: field(n, &t, "overhead")?, fill_per_param: field(n, &t, "fill_per_param")? };
    let (n, t) = c.expect("input")?;
    let (input_len, input_ch) = dims(n, t.first().ok_or_else(|| perr(n, "missing input shape"))?)?;
    let input_qp = parse_qp(n, t.iter().find_map(|s| s.strip_prefix("qp=")).ok_or_else(|| perr(n, "missing qp="))?)?;

    let mut stages = Vec::new();
    while let Some((_, line)) = c.peek() {
        if !line.starts_with("stage ") {
            break;
        }
        stages.push(parse_stage(&mut c, stages.len())?);
    }
    let mut design = AcceleratorDesign { device, bits, input_len, input_ch, input_qp, cycle, stages };

    // link lines carry the buffer plans
    let n_links = design.stages.len() + 1;
    let mut link_lines = Vec::with_capacity(n_links);
    for i in 0..n_links {
        let (n, t) = c.expect("link")?;
        let from = if i == 0 { "input".to_string() } else { (i - 1).to_string() };
        let to = if i + 1 == n_links { "output".to_string() } else { i.to_string() };
        if t.len() < 4 || t[0] != from || t[1] != "->" || t[2] != to {
            return Err(perr(n, format!("expected link {from} -> {to}")));
        }
        let plan = match t[3] {
            "full" => LinkPlan::Full,
            "ping_pong" => LinkPlan::PingPong,
            other => return Err(perr(n, format!("unknown buffer plan {other:?}"))),
        };
        if i == 0 && plan != LinkPlan::Full {
            return Err(perr(n, "the input memory is always fully buffered"));
        }
        if i > 0 {
            design.stages[i - 1].output = plan;
        }
        link_lines.push(n);
    }
    design.validate().map_err(|e| perr(link_lines.last().copied().unwrap_or(0), e.to_string()))?;

    // memories and ROM map must agree with what the stages imply
    let expected = derived_lines(&design);
    for want in expected.iter().skip(n_links) {
        let (n, got) = c.next("memory or rom line")?;
        if got.split_whitespace().ne(want.split_whitespace()) {
            return Err(perr(n, format!("expected `{want}`")));
        }
    }
    let (n, end) = c.next("end")?;
    if end != "end" {
        return Err(perr(n, "expected `end`"));
    }
    if let Some((n, _)) = c.peek() {
        return Err(perr(n, "trailing content after `end`"));
    }
    Ok(design)
}

fn parse_stage(c: &mut Cursor, index: usize) -> Result<LayerSchedule> {
    let (n, t) = c.expect("stage")?;
    if t.len() < 5 || t[3] != "->" {
        return Err(perr(n, "expected `stage <i> <kind> LENxCH -> LENxCH ...`"));
    }
    let i: usize = num(n, t[0], "stage index")?;
    if i != index {
        return Err(perr(n, format!("stage {i} out of order, expected {index}")));
    }
    let (in_len, in_ch) = dims(n, t[2])?;
    let (out_len, out_ch) = dims(n, t[4])?;
    let attrs = &t[5..];
    let op = match t[1] {
        "maxpool" => StageOp::MaxPool { kernel: field(n, attrs, "kernel")?, stride: field(n, attrs, "stride")? },
        "passthrough" => StageOp::PassThrough,
        "gap" => {
            let input_qp = qp_line(c, "input_qp")?;
            let output_qp = qp_line(c, "output_qp")?;
            let requant = requant_line(c)?;
            StageOp::Gap(QGap { len: in_len, ch: in_ch, input_qp, output_qp, requant })
        }
        kind => {
            let kind = match kind {
                "conv" => MacKind::Conv,
                "depthwise" => MacKind::Depthwise,
                "pointwise" => MacKind::Pointwise,
                "dense" => MacKind::Dense,
                other => return Err(perr(n, format!("unknown stage kind {other:?}"))),
            };
            let relu = match field::<u8>(n, attrs, "relu")? {
                0 => false,
                1 => true,
                v => return Err(perr(n, format!("relu must be 0 or 1, found {v}"))),
            };
            let kernel = field(n, attrs, "kernel")?;
            let weight_qp = qp_line(c, "weight_qp")?;
            let input_qp = qp_line(c, "input_qp")?;
            let output_qp = qp_line(c, "output_qp")?;
            let requant = requant_line(c)?;
            let (wn, wt) = c.expect("weights")?;
            let weights = parse_ints(wn, &wt)?;
            let (bn, bt) = c.expect("bias")?;
            let bias = parse_ints(bn, &bt)?;
            StageOp::Mac(QMac { kind, in_ch, out_ch, kernel, weights, bias, weight_qp, input_qp, output_qp, requant, relu })
        }
    };
    Ok(LayerSchedule {
        op,
        in_len,
        in_ch,
        out_len,
        out_ch,
        output: LinkPlan::Full,
        cycles_per_output: field(n, attrs, "cycles_per_output")?,
        fill_cycles: field(n, attrs, "fill")?,
    })
}
