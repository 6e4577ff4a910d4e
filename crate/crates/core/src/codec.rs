//! Line-oriented text format, one transaction per line:
//!
//! ```text
//! T <txn_id> <session_id> <seq> <commit|abort> <fence|norm> <op>*
//! ```
//!
//! where each op is `w:<key>:<write_id>` or `r:<key>:<write_id>`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{self, Write};

use crate::error::{HistoryError, ParseError};
use crate::history::{History, OpKind, Operation, SessionId, Transaction, TxnId, WriteId};

/// One parsed line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub line: usize,
    pub committed: bool,
    pub txn: Transaction,
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, ParseError> {
    let tok = tok.ok_or_else(|| ParseError::syntax(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| ParseError::syntax(line, format!("invalid {what} {tok:?}")))
}

fn parse_op(tok: &str, line: usize) -> Result<Operation, ParseError> {
    let mut parts = tok.split(':');
    let kind = match parts.next() {
        Some("w") => OpKind::Write,
        Some("r") => OpKind::Read,
        _ => return Err(ParseError::syntax(line, format!("invalid operation {tok:?}"))),
    };
    let key = parts
        .next()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| ParseError::syntax(line, format!("missing key in {tok:?}")))?;
    let id: u64 = parse_num(parts.next(), line, "write id")?;
    if parts.next().is_some() {
        return Err(ParseError::syntax(line, format!("too many fields in {tok:?}")));
    }
    Ok(Operation {
        kind,
        key: key.into(),
        write_id: WriteId(id),
    })
}

/// Parses one non-empty line.
pub fn parse_line(text: &str, line: usize) -> Result<Record, ParseError> {
    let mut toks = text.split(' ').filter(|t| !t.is_empty());
    if toks.next() != Some("T") {
        return Err(ParseError::syntax(line, "expected record tag T"));
    }
    let id: u64 = parse_num(toks.next(), line, "transaction id")?;
    let session: u32 = parse_num(toks.next(), line, "session id")?;
    let seq: u64 = parse_num(toks.next(), line, "sequence number")?;
    let committed = match toks.next() {
        Some("commit") => true,
        Some("abort") => false,
        other => {
            return Err(ParseError::syntax(
                line,
                format!("expected commit or abort, got {other:?}"),
            ))
        }
    };
    let is_fence = match toks.next() {
        Some("fence") => true,
        Some("norm") => false,
        other => {
            return Err(ParseError::syntax(
                line,
                format!("expected fence or norm, got {other:?}"),
            ))
        }
    };
    let ops = toks.map(|t| parse_op(t, line)).collect::<Result<Vec<_>, _>>()?;
    let txn = Transaction {
        id: TxnId(id),
        session: SessionId(session),
        seq,
        ops,
        is_fence,
    };
    if committed {
        txn.validate().map_err(|source| ParseError::Invalid { line, source })?;
    }
    Ok(Record { line, committed, txn })
}

/// Committed transactions in file order. Transaction ids must be unique over
/// all lines and write ids over committed transactions.
pub fn parse_records(text: &str) -> Result<Vec<Transaction>, ParseError> {
    let mut ids = BTreeSet::new();
    let mut writes = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        let rec = parse_line(raw, line)?;
        if !ids.insert(rec.txn.id) {
            return Err(ParseError::Invalid {
                line,
                source: HistoryError::DuplicateTxn(rec.txn.id),
            });
        }
        if !rec.committed {
            continue;
        }
        for w in rec.txn.writes() {
            if !writes.insert(w.write_id) {
                return Err(ParseError::Invalid {
                    line,
                    source: HistoryError::DuplicateWriteId(w.write_id),
                });
            }
        }
        out.push(rec.txn);
    }
    Ok(out)
}

/// Parses a history; aborted transactions are dropped.
pub fn parse(text: &str) -> Result<History, ParseError> {
    let mut h = History::new();
    for t in parse_records(text)? {
        h.insert(t)?;
    }
    Ok(h)
}

pub fn format_txn(t: &Transaction) -> String {
    let mut s = format!(
        "T {} {} {} commit {}",
        t.id,
        t.session,
        t.seq,
        if t.is_fence { "fence" } else { "norm" }
    );
    for op in &t.ops {
        let tag = match op.kind {
            OpKind::Read => 'r',
            OpKind::Write => 'w',
        };
        write!(s, " {tag}:{}:{}", op.key, op.write_id).unwrap();
    }
    s
}

/// Canonical form: by session, then position in session.
pub fn serialize(h: &History) -> String {
    let mut out = String::new();
    for t in h.canonical_order() {
        out.push_str(&format_txn(t));
        out.push('\n');
    }
    out
}

pub fn write_history(h: &History, mut w: impl Write) -> io::Result<()> {
    for t in h.canonical_order() {
        writeln!(w, "{}", format_txn(t))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_resolves_to_writer() {
        let h = parse("T 1 1 0 commit norm w:x:10\nT 3 2 0 commit norm r:x:10\n").unwrap();
        let rf = h.read_from().unwrap();
        assert_eq!(rf, vec![(TxnId(1), "x".into(), TxnId(3))]);
    }

    #[test]
    fn empty_input() {
        assert!(parse("").unwrap().is_empty());
        assert_eq!(serialize(&History::new()), "");
    }

    #[test]
    fn single_write_line() {
        let h = History::from_transactions([Transaction::new(4, 2, 0, vec![Operation::write("k", 7)])]).unwrap();
        assert_eq!(serialize(&h), "T 4 2 0 commit norm w:k:7\n");
    }

    #[test]
    fn aborted_dropped_but_ids_reserved() {
        let h = parse("T 1 1 0 abort norm w:x:1\nT 2 1 1 commit norm w:x:1\n").unwrap();
        assert_eq!(h.len(), 1);
        let err = parse("T 1 1 0 abort norm\nT 1 1 1 commit norm\n").unwrap_err();
        assert!(matches!(
            err,
            ParseError::Invalid {
                line: 2,
                source: HistoryError::DuplicateTxn(_)
            }
        ));
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(
            parse("T 1 1 0 commit norm q:x:1"),
            Err(ParseError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse("\nT 1 1 zero commit norm"),
            Err(ParseError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            parse("T 1 1 0 commit norm w:x:1 w:x:2"),
            Err(ParseError::Invalid {
                source: HistoryError::NonUniqueKeyAccess { .. },
                ..
            })
        ));
        assert!(matches!(
            parse("T 1 1 0 commit norm w:x:1\nT 2 2 0 commit norm w:y:1"),
            Err(ParseError::Invalid {
                source: HistoryError::DuplicateWriteId(_),
                ..
            })
        ));
        assert!(matches!(
            parse("T 1 1 0 commit norm r:x"),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            parse("T 1 1 0 commit fence w:x:1"),
            Err(ParseError::Invalid { .. })
        ));
    }

    #[test]
    fn session_permutation_is_irrelevant() {
        let a = "T 1 1 0 commit norm w:x:1\nT 2 2 0 commit norm r:x:1\nT 3 1 1 commit norm w:y:2\n";
        let b = "T 2 2 0 commit norm r:x:1\nT 1 1 0 commit norm w:x:1\nT 3 1 1 commit norm w:y:2\n";
        assert_eq!(parse(a).unwrap(), parse(b).unwrap());
        let canonical = "T 1 1 0 commit norm w:x:1\nT 3 1 1 commit norm w:y:2\nT 2 2 0 commit norm r:x:1\n";
        assert_eq!(serialize(&parse(b).unwrap()), canonical);
        assert_eq!(serialize(&parse(canonical).unwrap()), canonical);
    }
}
