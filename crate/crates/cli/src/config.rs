use std::collections::BTreeSet;

use wikicite::NamespaceFilter;

/// Parses top-N sizes such as `2..10`, `5,10,20` or `2..5,10`. Ranges are
/// inclusive. Entries must be strictly increasing and at least 2.
pub fn parse_sweep(spec: &str) -> Result<Vec<usize>, String> {
    let mut out: Vec<usize> = Vec::new();
    for part in spec.split(',').map(str::trim) {
        if part.is_empty() {
            return Err(format!("empty entry in sweep {spec:?}"));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("{s:?} in sweep {spec:?} is not a non-negative integer"))
        };
        match part.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (parse(lo)?, parse(hi.strip_prefix('=').unwrap_or(hi))?);
                if hi < lo {
                    return Err(format!("range {part:?} is empty"));
                }
                out.extend(lo..=hi);
            }
            None => out.push(parse(part)?),
        }
    }
    if let Some(&small) = out.iter().find(|&&n| n < 2) {
        return Err(format!("sweep entry {small} is below 2; a correlation needs two journals"));
    }
    if let Some(w) = out.windows(2).find(|w| w[1] <= w[0]) {
        return Err(format!("sweep entries must be strictly increasing ({} then {})", w[0], w[1]));
    }
    Ok(out)
}

/// `all`, or a comma-separated list of namespace numbers.
pub fn parse_namespaces(spec: &str) -> Result<NamespaceFilter, String> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(NamespaceFilter::All);
    }
    let set = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| format!("namespace {s:?} is not a non-negative integer"))
        })
        .collect::<Result<BTreeSet<u32>, _>>()?;
    Ok(NamespaceFilter::Only(set))
}

/// `K:M` for the combined-measure overlap report.
pub fn parse_overlap(spec: &str) -> Result<(usize, usize), String> {
    let (k, m) = spec.split_once(':').ok_or_else(|| format!("expected K:M, got {spec:?}"))?;
    let k = k.trim().parse().map_err(|_| format!("bad K in {spec:?}"))?;
    let m = m.trim().parse().map_err(|_| format!("bad M in {spec:?}"))?;
    Ok((k, m))
}
