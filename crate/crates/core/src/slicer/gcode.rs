//! G-code for a tool path: one `G1 F X Y Z E` line per move with absolute,
//! cumulative extrusion, between a fixed preamble and postamble.

use super::toolpath::{Move, ToolPath};
use crate::error::{invalid, Error, Result};

/// Extruder advance per mm of deposited path.
pub const DEFAULT_FLOW: f64 = 0.05;

/// Millimetres, absolute positioning, absolute extrusion, home, zero the extruder.
const PREAMBLE: [&str; 5] = ["G21", "G90", "M82", "G28", "G92 E0"];
/// Retract, motors off.
const POSTAMBLE: [&str; 2] = ["G10", "M84"];

/// One linear move: feed in mm/min, target position, cumulative extrusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub f: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub e: f64,
}

impl Linear {
    pub fn to_line(&self) -> String {
        format!("G1 F{:.5} X{:.5} Y{:.5} Z{:.5} E{:.5}", self.f, self.x, self.y, self.z, self.e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GCodeProgram {
    pub preamble: Vec<String>,
    pub commands: Vec<Linear>,
    pub postamble: Vec<String>,
}

impl GCodeProgram {
    /// One command per line, numbers with five decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in self.preamble.iter().cloned().chain(self.commands.iter().map(Linear::to_line)).chain(self.postamble.iter().cloned()) {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Extrusion at the end of the program.
    pub fn total_extrusion(&self) -> f64 {
        self.commands.last().map_or(0.0, |c| c.e)
    }

    /// The moves back, starting at the origin; a move extrudes iff E grows.
    pub fn to_toolpath(&self) -> ToolPath {
        let mut e = 0.0;
        let moves = self
            .commands
            .iter()
            .map(|c| {
                let extrude = c.e > e;
                e = c.e;
                Move { to: [c.x, c.y, c.z], feed: c.f, extrude }
            })
            .collect();
        ToolPath { start: [0.0; 3], moves }
    }
}

/// Program for `path` with extrusion `flow` per mm of extruding move.
pub fn emit_gcode(path: &ToolPath, flow: f64) -> Result<GCodeProgram> {
    if !(flow > 0.0 && flow.is_finite()) {
        return invalid(format!("flow coefficient must be positive, got {flow}"));
    }
    path.validate()?;
    let mut e = 0.0;
    let commands = path
        .segments()
        .map(|(from, m)| {
            if m.extrude {
                let len = ((m.to[0] - from[0]).powi(2) + (m.to[1] - from[1]).powi(2) + (m.to[2] - from[2]).powi(2)).sqrt();
                e += flow * len;
            }
            Linear { f: m.feed, x: m.to[0], y: m.to[1], z: m.to[2], e }
        })
        .collect();
    Ok(GCodeProgram {
        preamble: PREAMBLE.iter().map(|s| s.to_string()).collect(),
        commands,
        postamble: POSTAMBLE.iter().map(|s| s.to_string()).collect(),
    })
}

fn parse_linear(line: &str, number: usize) -> Result<Linear> {
    let bad = |what: String| Error::Parse(format!("line {number}: {what}"));
    let mut words = line.split_whitespace();
    words.next();
    let mut values = [None; 5];
    for w in words {
        let slot = "FXYZE".find(w.chars().next().unwrap_or(' ')).ok_or_else(|| bad(format!("unexpected word {w:?}")))?;
        let v: f64 = w[1..].parse().map_err(|_| bad(format!("bad number in {w:?}")))?;
        if !v.is_finite() {
            return Err(bad(format!("non-finite number in {w:?}")));
        }
        if values[slot].replace(v).is_some() {
            return Err(bad(format!("repeated word {w:?}")));
        }
    }
    let [f, x, y, z, e] = values;
    match (f, x, y, z, e) {
        (Some(f), Some(x), Some(y), Some(z), Some(e)) => Ok(Linear { f, x, y, z, e }),
        _ => Err(bad("G1 needs all of F X Y Z E".into())),
    }
}

/// Reads programs in the layout written by `GCodeProgram::to_text`: lines
/// before the first `G1` form the preamble and lines after the last one the
/// postamble. Comments after `;` and blank lines are dropped.
pub fn parse_gcode(text: &str) -> Result<GCodeProgram> {
    let mut program = GCodeProgram { preamble: vec![], commands: vec![], postamble: vec![] };
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.split_whitespace().next() == Some("G1") {
            if !program.postamble.is_empty() {
                return Err(Error::Parse(format!("line {}: G1 after the postamble", n + 1)));
            }
            let c = parse_linear(line, n + 1)?;
            if !(c.f > 0.0) {
                return Err(Error::Parse(format!("line {}: feed must be positive", n + 1)));
            }
            if program.commands.last().is_some_and(|p| c.e < p.e) {
                return Err(Error::Parse(format!("line {}: extrusion decreases", n + 1)));
            }
            program.commands.push(c);
        } else if program.commands.is_empty() {
            program.preamble.push(line.to_string());
        } else {
            program.postamble.push(line.to_string());
        }
    }
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_path() -> ToolPath {
        ToolPath {
            start: [0.0; 3],
            moves: vec![
                Move { to: [1.0, 1.0, 0.2], feed: 6000.0, extrude: false },
                Move { to: [11.0, 1.0, 0.2], feed: 1200.0, extrude: true },
                Move { to: [11.0, 11.0, 0.2], feed: 1200.0, extrude: true },
                Move { to: [0.5, 0.25, 0.4], feed: 6000.0, extrude: false },
            ],
        }
    }

    #[test]
    fn extrusion_is_cumulative() {
        let p = emit_gcode(&sample_path(), 0.05).unwrap();
        let es: Vec<f64> = p.commands.iter().map(|c| c.e).collect();
        assert_eq!(es, [0.0, 0.5, 1.0, 1.0]);
        assert_eq!(p.total_extrusion(), 20.0 * 0.05);
        assert_eq!(p.commands[1].to_line(), "G1 F1200.00000 X11.00000 Y1.00000 Z0.20000 E0.50000");
    }

    #[test]
    fn empty_path_has_only_the_fixed_blocks() {
        let p = emit_gcode(&ToolPath::default(), DEFAULT_FLOW).unwrap();
        assert_eq!(p.to_text(), "G21\nG90\nM82\nG28\nG92 E0\nG10\nM84\n");
        assert_eq!(parse_gcode(&p.to_text()).unwrap().to_text(), p.to_text());
    }

    #[test]
    fn text_round_trip() {
        let p = emit_gcode(&sample_path(), DEFAULT_FLOW).unwrap();
        let text = p.to_text();
        let back = parse_gcode(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.to_toolpath(), sample_path());
    }

    #[test]
    fn rejects_malformed_programs() {
        assert!(emit_gcode(&sample_path(), 0.0).is_err());
        let mut nan = sample_path();
        nan.moves[1].to[0] = f64::NAN;
        assert!(emit_gcode(&nan, DEFAULT_FLOW).is_err());
        for text in [
            "G1 F1 X0 Y0 Z0\n",
            "G1 F1 X0 Y0 Z0 E0 E1\n",
            "G1 F1 X0 Y0 Z0 Q0 E0\n",
            "G1 F1 Xa Y0 Z0 E0\n",
            "G1 F0 X0 Y0 Z0 E0\n",
            "G1 F1 X0 Y0 Z0 E1\nG1 F1 X0 Y0 Z0 E0\n",
            "G1 F1 X0 Y0 Z0 E0\nM84\nG1 F1 X0 Y0 Z0 E0\n",
        ] {
            assert!(parse_gcode(text).is_err(), "{text}");
        }
        let commented = parse_gcode("; header\nG21 ; mm\n\nG1 F1 X0 Y0 Z0 E0\n").unwrap();
        assert_eq!(commented.preamble, ["G21"]);
    }

    proptest! {
        #[test]
        fn emitted_programs_round_trip(
            pts in prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0, 0.0f64..300.0, any::<bool>()), 0..40),
            flow in 0.001f64..1.0,
        ) {
            let moves = pts.iter().map(|&(x, y, z, extrude)| Move { to: [x, y, z], feed: 1800.0, extrude }).collect();
            let path = ToolPath { start: [0.0; 3], moves };
            let p = emit_gcode(&path, flow).unwrap();
            let text = p.to_text();
            let back = parse_gcode(&text).unwrap();
            prop_assert_eq!(back.to_text(), text);
            for (a, b) in p.commands.iter().zip(&back.commands) {
                prop_assert!((a.x - b.x).abs() <= 5e-6 && (a.y - b.y).abs() <= 5e-6 && (a.z - b.z).abs() <= 5e-6);
            }
            for w in p.commands.windows(2) {
                prop_assert!(w[1].e >= w[0].e);
            }
            let material: f64 = path.segments().filter(|(_, m)| m.extrude)
                .map(|(a, m)| ((m.to[0]-a[0]).powi(2) + (m.to[1]-a[1]).powi(2) + (m.to[2]-a[2]).powi(2)).sqrt()).sum();
            prop_assert!((p.total_extrusion() - flow * material).abs() <= 1e-9 * (flow * material).max(1e-300));
        }
    }
}
