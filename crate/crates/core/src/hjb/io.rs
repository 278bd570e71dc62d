use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{PdeSolution, SolveDiagnostics, SolveKind};
use crate::error::{Error, Result};
use crate::preferences::Preferences;

const MAGIC: &[u8; 8] = b"LGVPDE01";

pub(super) fn write_csv<W: Write>(sol: &PdeSolution, w: &mut W, stride: usize) -> Result<()> {
    let stride = stride.max(1);
    writeln!(w, "# log_g = log(alpha*g), alpha = {}, rho = {}", sol.prefs.alpha, sol.prefs.rho)?;
    writeln!(w, "t,L,lambda,log_g,dlogg_dL")?;
    let last = sol.times.len() - 1;
    for k in (0..sol.times.len()).filter(|k| k % stride == 0 || *k == last) {
        for (j, l) in sol.l_grid.iter().enumerate() {
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.12e},{:.12e}",
                sol.times[k],
                l,
                l.exp(),
                sol.log_g[[k, j]],
                sol.dlog_g_dl[[k, j]]
            )?;
        }
    }
    Ok(())
}

fn kind_code(k: SolveKind) -> u8 {
    match k {
        SolveKind::ZeroVolatility => 0,
        SolveKind::OneFund => 1,
        SolveKind::Finite => 2,
    }
}

fn write_f64s<W: Write>(w: &mut W, xs: impl IntoIterator<Item = f64>) -> Result<()> {
    for x in xs {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

pub(super) fn write_binary<W: Write>(sol: &PdeSolution, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(kind_code(sol.diagnostics.kind))?;
    write_f64s(w, [sol.prefs.alpha, sol.prefs.rho, sol.prefs.delta, sol.step_dt])?;
    for n in [
        sol.l_grid.len(),
        sol.times.len(),
        sol.boundary_slopes.len(),
        sol.diagnostics.steps,
        sol.diagnostics.iterations_total,
        sol.diagnostics.iterations_max,
    ] {
        w.write_u64::<LittleEndian>(n as u64)?;
    }
    write_f64s(w, sol.l_grid.iter().copied())?;
    write_f64s(w, sol.times.iter().copied())?;
    write_f64s(w, sol.log_g.iter().copied())?;
    write_f64s(w, sol.dlog_g_dl.iter().copied())?;
    write_f64s(w, sol.boundary_slopes.iter().flat_map(|&(a, b)| [a, b]))?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut v)?;
    Ok(v)
}

pub(super) fn read_binary<R: Read>(r: &mut R) -> Result<PdeSolution> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Io("not a solution file".into()));
    }
    let kind = match r.read_u8()? {
        0 => SolveKind::ZeroVolatility,
        1 => SolveKind::OneFund,
        2 => SolveKind::Finite,
        k => return Err(Error::Io(format!("unknown solve kind {k}"))),
    };
    let head = read_f64s(r, 4)?;
    let mut counts = [0usize; 6];
    for c in counts.iter_mut() {
        *c = r.read_u64::<LittleEndian>()? as usize;
    }
    let [nl, ns, nb, steps, it_total, it_max] = counts;
    if nl < 3 || ns == 0 || nb == 0 || nl.saturating_mul(ns) > 1 << 31 {
        return Err(Error::Io("corrupt solution header".into()));
    }
    let l_grid = read_f64s(r, nl)?;
    let times = read_f64s(r, ns)?;
    let shape = |v: Vec<f64>| Array2::from_shape_vec((ns, nl), v).map_err(|e| Error::Io(e.to_string()));
    let log_g = shape(read_f64s(r, ns * nl)?)?;
    let dlog = shape(read_f64s(r, ns * nl)?)?;
    let flat = read_f64s(r, 2 * nb)?;
    let slopes = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let prefs = Preferences::new(head[0], head[1], head[2])?;
    let diagnostics = SolveDiagnostics { kind, steps, iterations_total: it_total, iterations_max: it_max };
    PdeSolution::assemble(l_grid, times, log_g, dlog, slopes, head[3], prefs, diagnostics)
}
