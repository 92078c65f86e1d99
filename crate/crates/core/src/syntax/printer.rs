use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use super::{Branch, DataDecl, Expr, FunDecl, LocExpr, LocReg, LocType, Program, Ty};

const INDENT: usize = 2;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.datadecls {
        data_decl(&mut out, d);
        out.push('\n');
    }
    for f in &p.fundecls {
        if !out.is_empty() {
            out.push('\n');
        }
        fun_decl(&mut out, f);
    }
    if !out.is_empty() {
        out.push('\n');
    }
    out.push_str("main =\n");
    push_lines(&mut out, &p.main, INDENT);
    out
}

/// Multi-line rendering of an expression, one binding form per line.
pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    push_lines(&mut out, e, 0);
    out
}

fn data_decl(out: &mut String, d: &DataDecl) {
    let _ = write!(out, "data {} =", d.tycon);
    for (k, c) in d.constructors.iter().enumerate() {
        out.push_str(if k == 0 { " " } else { " | " });
        out.push_str(c.tag.as_str());
        for f in &c.fields {
            out.push(' ');
            ty(out, f);
        }
    }
}

fn fun_decl(out: &mut String, f: &FunDecl) {
    let _ = write!(out, "fun {} : forall", f.name);
    for lr in &f.loc_params {
        let _ = write!(out, " {}@{}", lr.loc, lr.region);
    }
    out.push_str(" .");
    for p in &f.params {
        out.push(' ');
        loctype(out, &p.ty);
        out.push_str(" ->");
    }
    out.push(' ');
    loctype(out, &f.ret);
    let _ = write!(out, "\n{} ", f.name);
    locregs(out, &f.loc_params);
    for p in &f.params {
        let _ = write!(out, " {}", p.var);
    }
    out.push_str(" =\n");
    push_lines(out, &f.body, INDENT);
}

fn push_lines(out: &mut String, e: &Expr, indent: usize) {
    let mut lines = Vec::new();
    lines_of(e, indent, &mut lines);
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
}

fn line(indent: usize, text: String) -> String {
    let mut s = String::with_capacity(indent + text.len());
    s.extend(core::iter::repeat_n(' ', indent));
    s.push_str(&text);
    s
}

fn is_simple(e: &Expr) -> bool {
    matches!(
        e,
        Expr::Var(_)
            | Expr::Loc(_)
            | Expr::Int(_)
            | Expr::IvarInt(_)
            | Expr::PrimOp(..)
            | Expr::App(..)
            | Expr::DataCon(..)
    )
}

fn lines_of(e: &Expr, indent: usize, out: &mut Vec<String>) {
    let mut s = String::new();
    match e {
        Expr::LetRegion(r, body) => {
            out.push(line(indent, alloc::format!("letregion {r} in")));
            lines_of(body, indent, out);
        }
        Expr::LetLoc(lr, le, body) => {
            s.push_str("letloc ");
            locreg(&mut s, lr);
            s.push_str(" = ");
            locexp(&mut s, le);
            s.push_str(" in");
            out.push(line(indent, s));
            lines_of(body, indent, out);
        }
        Expr::Let {
            var,
            ty,
            bound,
            spawn,
            body,
        } => {
            let _ = write!(s, "let {var} : ");
            loctype(&mut s, ty);
            s.push_str(" =");
            if *spawn {
                s.push_str(" spawn");
            }
            if is_simple(bound) {
                s.push(' ');
                simple(&mut s, bound);
                s.push_str(" in");
                out.push(line(indent, s));
            } else {
                s.push_str(" (");
                out.push(line(indent, s));
                lines_of(bound, indent + INDENT, out);
                out.push(line(indent, String::from(") in")));
            }
            lines_of(body, indent, out);
        }
        Expr::Case(scrut, branches) => {
            s.push_str("case ");
            inline(&mut s, scrut);
            s.push_str(" of {");
            out.push(line(indent, s));
            for b in branches {
                branch(b, indent + INDENT, out);
            }
            out.push(line(indent, String::from("}")));
        }
        Expr::If(c, t, f) => {
            s.push_str("if ");
            inline(&mut s, c);
            out.push(line(indent, s));
            out.push(line(indent, String::from("then")));
            lines_of(t, indent + INDENT, out);
            out.push(line(indent, String::from("else")));
            lines_of(f, indent + INDENT, out);
        }
        _ => {
            simple(&mut s, e);
            out.push(line(indent, s));
        }
    }
}

fn branch(b: &Branch, indent: usize, out: &mut Vec<String>) {
    let mut s = String::from(b.tag.as_str());
    for pb in &b.binds {
        let _ = write!(s, " ({} : ", pb.var);
        loctype(&mut s, &pb.ty);
        s.push(')');
    }
    s.push_str(" ->");
    if is_simple(&b.body) {
        s.push(' ');
        simple(&mut s, &b.body);
        out.push(line(indent, s));
    } else {
        out.push(line(indent, s));
        lines_of(&b.body, indent + INDENT, out);
    }
}

/// Single-line rendering; compound forms are parenthesised.
fn inline(out: &mut String, e: &Expr) {
    if is_simple(e) {
        simple(out, e);
    } else {
        let mut lines = Vec::new();
        lines_of(e, 0, &mut lines);
        out.push('(');
        out.push_str(&lines.join(" "));
        out.push(')');
    }
}

fn simple(out: &mut String, e: &Expr) {
    match e {
        Expr::Var(x) => out.push_str(x.as_str()),
        Expr::Int(n) if *n < 0 => {
            let _ = write!(out, "(-{})", n.unsigned_abs());
        }
        Expr::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Expr::IvarInt(x) => {
            let _ = write!(out, "?{x}");
        }
        Expr::Loc(cl) => {
            let _ = write!(out, "{cl}");
        }
        Expr::PrimOp(op, a, b) => {
            operand(out, a);
            let _ = write!(out, " {} ", op.symbol());
            operand(out, b);
        }
        Expr::App(f, locs, args) => {
            let _ = write!(out, "{f} ");
            locregs(out, locs);
            for a in args {
                out.push(' ');
                arg(out, a);
            }
        }
        Expr::DataCon(k, lr, args) => {
            let _ = write!(out, "{k} ");
            locreg(out, lr);
            for a in args {
                out.push(' ');
                arg(out, a);
            }
        }
        _ => inline(out, e),
    }
}

fn arg(out: &mut String, e: &Expr) {
    if e.is_value() {
        simple(out, e);
    } else {
        operand(out, e);
    }
}

fn operand(out: &mut String, e: &Expr) {
    if matches!(e, Expr::PrimOp(..) | Expr::App(..) | Expr::DataCon(..)) {
        out.push('(');
        simple(out, e);
        out.push(')');
    } else {
        inline(out, e);
    }
}

fn ty(out: &mut String, t: &Ty) {
    match t {
        Ty::Int => out.push_str("Int"),
        Ty::Con(c) => out.push_str(c.as_str()),
    }
}

fn locreg(out: &mut String, lr: &LocReg) {
    let _ = write!(out, "{}@{}", lr.loc, lr.region);
}

fn locregs(out: &mut String, lrs: &[LocReg]) {
    out.push('[');
    for (k, lr) in lrs.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        locreg(out, lr);
    }
    out.push(']');
}

fn loctype(out: &mut String, lt: &LocType) {
    match lt {
        LocType::Int => out.push_str("Int"),
        LocType::At(t, lr) => {
            ty(out, t);
            out.push('@');
            locreg(out, lr);
        }
    }
}

fn locexp(out: &mut String, le: &LocExpr) {
    match le {
        LocExpr::Start(r) => {
            let _ = write!(out, "start {r}");
        }
        LocExpr::Tag(lr, n) => {
            locreg(out, lr);
            let _ = write!(out, " + {n}");
        }
        LocExpr::After(t, lr) => {
            out.push_str("after(");
            ty(out, t);
            out.push('@');
            locreg(out, lr);
            out.push(')');
        }
    }
}
