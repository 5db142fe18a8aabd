//! Plain-text token listing, the human-readable twin of the FSQB
//! container. `pack` reads it, `unpack` writes it, and the two round
//! trip byte-identically.

use fsqkit::bitstream::TokenStream;
use fsqkit::Rate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ListingError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Stream(String),
}

pub fn format(ts: &TokenStream) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "rate {}/{}\n",
        ts.frame_rate().numerator(),
        ts.frame_rate().denominator()
    ));
    out.push_str(&format!("dims {}\n", ts.dims()));
    out.push_str(&format!("stages {}\n", ts.stages()));
    for levels in ts.stage_levels() {
        out.push_str("levels");
        for l in levels {
            out.push_str(&format!(" {l}"));
        }
        out.push('\n');
    }
    out.push_str(&format!("frames {}\n", ts.frames().len()));
    for frame in ts.frames() {
        let tokens: Vec<String> = frame.iter().map(|t| t.to_string()).collect();
        out.push_str(&tokens.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<TokenStream, ListingError> {
    let mut lines = text.lines().enumerate();
    let mut next = || -> Result<(usize, &str), ListingError> {
        for (n, line) in lines.by_ref() {
            let trimmed = line.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Ok((n + 1, trimmed));
            }
        }
        Err(ListingError::Parse {
            line: 0,
            reason: "unexpected end of listing".into(),
        })
    };
    let err = |line: usize, reason: String| ListingError::Parse { line, reason };

    let (n, line) = next()?;
    let rate_str = line
        .strip_prefix("rate ")
        .ok_or_else(|| err(n, "expected `rate N/D`".into()))?;
    let rate = Rate::parse(rate_str).map_err(|e| err(n, e.to_string()))?;

    let (n, line) = next()?;
    let dims: usize = line
        .strip_prefix("dims ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| err(n, "expected `dims N`".into()))?;

    let (n, line) = next()?;
    let stages: usize = line
        .strip_prefix("stages ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| err(n, "expected `stages N`".into()))?;

    let mut stage_levels = Vec::with_capacity(stages);
    for _ in 0..stages {
        let (n, line) = next()?;
        let rest = line
            .strip_prefix("levels")
            .ok_or_else(|| err(n, "expected `levels ...`".into()))?;
        let levels: Result<Vec<u32>, _> = rest.split_whitespace().map(str::parse).collect();
        let levels = levels.map_err(|e| err(n, format!("bad level count: {e}")))?;
        if levels.len() != dims {
            return Err(err(n, format!("expected {dims} level counts, got {}", levels.len())));
        }
        stage_levels.push(levels);
    }

    let (n, line) = next()?;
    let frames: usize = line
        .strip_prefix("frames ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| err(n, "expected `frames N`".into()))?;

    let mut payload = Vec::with_capacity(frames);
    for _ in 0..frames {
        let (n, line) = next()?;
        let tokens: Result<Vec<u64>, _> = line.split_whitespace().map(str::parse).collect();
        let tokens = tokens.map_err(|e| err(n, format!("bad token: {e}")))?;
        if tokens.len() != stages {
            return Err(err(n, format!("expected {stages} tokens, got {}", tokens.len())));
        }
        payload.push(tokens);
    }

    TokenStream::new(rate, stage_levels, payload).map_err(|e| ListingError::Stream(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_byte_identically() {
        let ts = TokenStream::new(
            Rate::new(25, 2).unwrap(),
            vec![vec![5, 3], vec![5, 3]],
            vec![vec![14, 2], vec![0, 7]],
        )
        .unwrap();
        let text = format(&ts);
        let back = parse(&text).unwrap();
        assert_eq!(back, ts);
        assert_eq!(format(&back), text);
    }

    #[test]
    fn rejects_out_of_range_tokens() {
        let text = "rate 25/1\ndims 1\nstages 1\nlevels 3\nframes 1\n99\n";
        assert!(matches!(parse(text), Err(ListingError::Stream(_))));
    }

    #[test]
    fn reports_line_numbers() {
        let text = "rate 25/1\ndims 1\nstages 1\nlevels 3\nframes 2\n1\nnot-a-number\n";
        match parse(text) {
            Err(ListingError::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }
}
