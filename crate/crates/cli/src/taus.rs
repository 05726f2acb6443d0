//! Threshold lists: `start:stop:step` (both ends inclusive) or a single value.

/// Slack for deciding whether `stop` is reached.
const RANGE_SLACK: f64 = 1e-9;

pub fn parse_taus(spec: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str, what: &str| -> Result<f64, String> {
        let v: f64 = s.trim().parse().map_err(|_| format!("--taus: {what} {s:?} is not a number"))?;
        if !v.is_finite() {
            return Err(format!("--taus: {what} must be finite"));
        }
        Ok(v)
    };
    let parts: Vec<&str> = spec.split(':').collect();
    let taus = match parts.as_slice() {
        [single] => vec![num(single, "value")?],
        [start, stop, step] => {
            let (start, stop, step) = (num(start, "start")?, num(stop, "stop")?, num(step, "step")?);
            if step <= 0.0 {
                return Err("--taus: step must be positive".into());
            }
            if start > stop {
                return Err("--taus: start must not exceed stop".into());
            }
            let mut out = Vec::new();
            for k in 0.. {
                let v = start + k as f64 * step;
                if v > stop + RANGE_SLACK {
                    break;
                }
                out.push(v.min(stop));
            }
            out
        }
        _ => return Err(format!("--taus: expected start:stop:step or a single value, got {spec:?}")),
    };
    if let Some(bad) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(format!("--taus: thresholds must lie in [0, 1], got {bad}"));
    }
    Ok(taus)
}
