//! Value parsers for command-line flags and the `key = value` config file.

use std::f64::consts::PI;

use dualdress::applications::ScanAxis;
use dualdress::propagator::HarmonicTerm;
use dualdress::spinmath::Vec3;

pub fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

/// Radians, or a fraction of π such as `pi/2`, `-3pi/4`, `2*pi`, `0.5pi`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let Some(at) = t.find("pi") else {
        return parse_f64(&t);
    };
    let (head, tail) = (&t[..at], &t[at + 2..]);
    let head = head.trim_end_matches('*');
    let factor = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => parse_f64(h).map_err(|_| format!("bad angle '{s}'"))?,
    };
    let divisor = match tail {
        "" => 1.0,
        t => match t.strip_prefix('/') {
            Some(d) => parse_f64(d).map_err(|_| format!("bad angle '{s}'"))?,
            None => return Err(format!("bad angle '{s}'")),
        },
    };
    if divisor == 0.0 {
        return Err(format!("bad angle '{s}'"));
    }
    Ok(factor * PI / divisor)
}

pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z but got '{s}'"));
    }
    Ok(Vec3::new(parse_f64(parts[0])?, parse_f64(parts[1])?, parse_f64(parts[2])?))
}

/// `order:amplitude:phase`, phase optional.
pub fn parse_harmonic(s: &str) -> Result<HarmonicTerm, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(format!("expected order:amplitude[:phase] but got '{s}'"));
    }
    let order: u32 = parts[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad harmonic order in '{s}'"))?;
    if order == 0 {
        return Err("harmonic order must be positive".into());
    }
    let phase = match parts.get(2) {
        Some(p) => parse_angle(p)?,
        None => 0.0,
    };
    Ok(HarmonicTerm::new(parse_f64(parts[1])?, order, phase))
}

/// `param:lo:hi:n,param:lo:hi:n`.
pub fn parse_grid(s: &str) -> Result<(ScanAxis, ScanAxis), String> {
    let axes = s
        .split(',')
        .map(|spec| {
            let f: Vec<&str> = spec.split(':').collect();
            if f.len() != 4 {
                return Err(format!("expected param:lo:hi:n but got '{spec}'"));
            }
            let param = f[0].trim().parse().map_err(|e: dualdress::Error| e.to_string())?;
            let n = f[3].trim().parse().map_err(|_| format!("bad sample count in '{spec}'"))?;
            Ok(ScanAxis::new(param, parse_angle(f[1])?, parse_angle(f[2])?, n))
        })
        .collect::<Result<Vec<_>, String>>()?;
    match axes.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("a grid needs exactly two axes, got {}", axes.len())),
    }
}

/// `lo:hi`.
pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    match s.split(':').collect::<Vec<_>>().as_slice() {
        [a, b] => Ok((parse_angle(a)?, parse_angle(b)?)),
        _ => Err(format!("expected lo:hi but got '{s}'")),
    }
}

/// Reads `key = value` lines (blank lines and `#` comments ignored) and
/// returns them as flag tokens. Keys the user already passed on the command
/// line are skipped so that flags win; `true`/`false` values toggle switches.
pub fn config_tokens(text: &str, argv: &[String]) -> Result<Vec<String>, String> {
    let given = |key: &str| {
        let flag = format!("--{key}");
        argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut tokens = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", lineno + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            return Err(format!("config line {}: nested config files are not supported", lineno + 1));
        }
        if given(&key) {
            continue;
        }
        match value {
            "true" => tokens.push(format!("--{key}")),
            "false" => {}
            _ => tokens.push(format!("--{key}={value}")),
        }
    }
    Ok(tokens)
}
