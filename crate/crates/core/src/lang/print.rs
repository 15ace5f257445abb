//! Concrete-syntax printer; output re-parses to an equal program.

use std::fmt::Write;

use crate::vocab::{SortId, VarKind, Vocab};

use super::{Block, Decl, Exit, Init, Instruction, Process, Program, Stmt};

fn domain_str(vocab: &Vocab, sort: SortId) -> String {
    if sort == vocab.bool_sort() {
        return "bool".to_string();
    }
    let vals: Vec<String> = vocab.domain(sort).iter().map(|v| v.to_string()).collect();
    format!("{{{}}}", vals.join(", "))
}

fn decl_line(vocab: &Vocab, d: &Decl, shown_name: &str, keyword: &str) -> String {
    let mut s = format!("{keyword} {shown_name} : {}", domain_str(vocab, vocab.sort_of(d.var)));
    match &d.init {
        Some(Init::Value(v)) => {
            let _ = write!(s, " with {shown_name} = {v}");
        }
        Some(Init::Mirror(src)) => {
            let _ = write!(s, " with {shown_name} = {}", vocab.var_name(*src));
        }
        None => {}
    }
    s.push(';');
    s
}

fn write_if(
    out: &mut String,
    vocab: &Vocab,
    guard: &crate::vocab::Guard,
    then_stmts: &[Stmt],
    else_stmts: &[Stmt],
    indent: usize,
) {
    let pad = " ".repeat(indent);
    let _ = writeln!(out, "{pad}if ({}) {{", guard.display(vocab));
    write_stmts(out, vocab, then_stmts, indent + 2);
    if else_stmts.is_empty() {
        let _ = writeln!(out, "{pad}}}");
    } else if let [Stmt::If { guard: g2, then_stmts: t2, else_stmts: e2 }] = else_stmts {
        // keep synthesized update chains flat: `} else if (...) {`
        let _ = write!(out, "{pad}}} else ");
        let mut chain = String::new();
        write_if(&mut chain, vocab, g2, t2, e2, indent);
        out.push_str(chain.trim_start_matches(' '));
    } else {
        let _ = writeln!(out, "{pad}}} else {{");
        write_stmts(out, vocab, else_stmts, indent + 2);
        let _ = writeln!(out, "{pad}}}");
    }
}

pub(crate) fn write_stmts(out: &mut String, vocab: &Vocab, stmts: &[Stmt], indent: usize) {
    let pad = " ".repeat(indent);
    for s in stmts {
        match s {
            Stmt::Assign { targets, exprs } => {
                let ts: Vec<&str> = targets.iter().map(|t| vocab.var_name(*t)).collect();
                let es: Vec<String> =
                    exprs.iter().map(|e| e.display(vocab).to_string()).collect();
                let _ = writeln!(out, "{pad}{} := {};", ts.join(", "), es.join(", "));
            }
            Stmt::If { guard, then_stmts, else_stmts } => {
                write_if(out, vocab, guard, then_stmts, else_stmts, indent);
            }
        }
    }
}

pub(crate) fn write_block_body(
    out: &mut String,
    vocab: &Vocab,
    proc: &Process,
    b: &Block,
    indent: usize,
) {
    write_stmts(out, vocab, &b.stmts, indent);
    let pad = " ".repeat(indent);
    match &b.exit {
        Exit::Fall => {}
        Exit::Goto(to) => {
            let _ = writeln!(out, "{pad}goto {};", proc.label(*to));
        }
        Exit::Branch { guard, then_to, else_to } => {
            let _ = writeln!(
                out,
                "{pad}if ({}) {}, {};",
                guard.display(vocab),
                proc.label(*then_to),
                proc.label(*else_to)
            );
        }
    }
}

fn write_instr(out: &mut String, vocab: &Vocab, proc: &Process, ix: usize) {
    let label = proc.label(ix);
    match &proc.instructions[ix] {
        Instruction::Assign { targets, exprs } => {
            let ts: Vec<&str> = targets.iter().map(|t| vocab.var_name(*t)).collect();
            let es: Vec<String> = exprs.iter().map(|e| e.display(vocab).to_string()).collect();
            let _ = writeln!(out, "  {label}: {} := {};", ts.join(", "), es.join(", "));
        }
        Instruction::IfGoto { guard, then_to, else_to } => {
            let _ = writeln!(
                out,
                "  {label}: if ({}) {}, {};",
                guard.display(vocab),
                proc.label(*then_to),
                proc.label(*else_to)
            );
        }
        Instruction::Goto { to } => {
            let _ = writeln!(out, "  {label}: goto {};", proc.label(*to));
        }
        Instruction::Block(b) => {
            let _ = writeln!(out, "  {label}: atomic {{");
            write_block_body(out, vocab, proc, b, 4);
            let _ = writeln!(out, "  }}");
        }
        Instruction::Ccr { guard, body } => {
            let _ = writeln!(out, "  {label}: when {} -> {{", guard.display(vocab));
            write_block_body(out, vocab, proc, body, 4);
            let _ = writeln!(out, "  }}");
        }
    }
}

impl Program {
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for d in &self.decls {
            let info = self.vocab.var_info(d.var);
            if matches!(info.kind, VarKind::Shared | VarKind::Aux | VarKind::Shadow(_)) {
                out.push_str(&decl_line(&self.vocab, d, &info.name, "shared"));
                out.push('\n');
            }
        }
        for (i, proc) in self.processes.iter().enumerate() {
            out.push('\n');
            let _ = writeln!(out, "process {} {{", proc.name);
            let prefix = format!("{}.", proc.name);
            for d in &self.decls {
                let info = self.vocab.var_info(d.var);
                if info.kind == VarKind::Local(i) {
                    let bare = info.name.strip_prefix(&prefix).unwrap_or(&info.name);
                    out.push_str("  ");
                    out.push_str(&decl_line(&self.vocab, d, bare, "local"));
                    out.push('\n');
                }
            }
            for ix in 0..proc.instructions.len() {
                write_instr(&mut out, &self.vocab, proc, ix);
            }
            out.push_str("}\n");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;

    fn round_trip(src: &str) {
        let p1 = parse_program(src).unwrap_or_else(|e| panic!("first parse: {e}\n{src}"));
        let printed = p1.to_source();
        let p2 = parse_program(&printed)
            .unwrap_or_else(|e| panic!("reparse failed: {e}\n--- printed ---\n{printed}"));
        assert_eq!(p1, p2, "print/parse round trip changed the program:\n{printed}");
        assert_eq!(printed, p2.to_source(), "printer is not idempotent");
    }

    #[test]
    fn round_trips_plain_instructions() {
        round_trip(
            "shared v : {0, 1, 2} with v = 0;\n\
             process P1 { a: v := v + 1; b: if (v < 2) a, c; c: goto a; }\n\
             process P2 { a: v := 0; b: goto a; }",
        );
    }

    #[test]
    fn round_trips_blocks_and_regions() {
        round_trip(
            "shared v : {0..3} with v = 0;\nshared flag : bool with flag = F;\n\
             process P1 {\n  local y : {0, 1} with y = 1;\n\
               a: atomic { v := v + 1; y := 0; goto b; }\n\
               b: when (flag = F & loc2 = a) -> { if (v = 3) { v := 0; } else { flag := T; } if (y = 0) a, b; }\n\
             }\n\
             process P2 { a: flag := F; b: goto a; }",
        );
    }

    #[test]
    fn round_trips_mirror_inits_and_labels() {
        round_trip(
            "shared c : {0, 1, 2, 3};\nshared c0 : {0, 1, 2, 3} with c0 = c;\n\
             shared st : {idle, busy} with st = idle;\n\
             process P1 { a: st := busy; b: if (st = busy & c0 > 1) a, b; }",
        );
    }

    #[test]
    fn round_trips_else_if_chains() {
        round_trip(
            "shared x : {0, 1, 2} with x = 0;\nshared v : {0, 1} with v = 0;\n\
             process P1 {\n\
               a: when true -> { if (x = 0 & v = 0) { x := 1; } else if (x = 1) { x := 2; } else { x := 0; } v := 1; }\n\
               b: goto a;\n }",
        );
    }
}
