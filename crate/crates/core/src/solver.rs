//! Global assembly of the saddle-point system over free unknowns and its
//! direct sparse solution.
//!
//! Constrained unknowns are eliminated: their prescribed values are moved to
//! the right-hand side during the scatter.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::{Mat, Side};
use rayon::prelude::*;

use crate::error::{HdgError, Result};
use crate::forms::{Element, FormContext, LocalBlock, PhysicalParams, StepInput, Terms};
use crate::femlib::ReferenceElement;
use crate::mesh::{FacetTag, Mesh};
use crate::scenarios::FlowData;
use crate::spaces::{l2_project_facet, l2_project_facet_vector, DofSystem};

/// Upper bound on cells for the dense spectral probes.
pub const PROBE_CELL_LIMIT: usize = 1000;

/// Relative residual accepted from the direct solver.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

const SKIP: u32 = u32::MAX;

/// Compressed-column pattern over free unknowns, with the position of every
/// local matrix entry of every element.
#[derive(Debug, Clone)]
pub struct SparsityPattern {
    pub n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Start of each element's slot table in `slots`.
    slot_start: Vec<usize>,
    /// Row-major local entry -> value index, `SKIP` when not stored.
    slots: Vec<u32>,
}

impl SparsityPattern {
    /// `index` maps a global unknown to its row/column, `stored` filters
    /// pairs of global unknowns whose entry is kept.
    fn build(
        n: usize,
        element_dofs: &[Vec<usize>],
        index: impl Fn(usize) -> Option<usize>,
        stored: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for ld in element_dofs {
            for &gj in ld {
                let Some(j) = index(gj) else { continue };
                for &gi in ld {
                    if let Some(i) = index(gi) {
                        if stored(gi, gj) {
                            cols[j].push(i);
                        }
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        if row_idx.len() >= SKIP as usize {
            return Err(HdgError::InvalidParameter("system too large for 32-bit slot tables".into()));
        }
        let mut slot_start = Vec::with_capacity(element_dofs.len());
        let mut slots = Vec::new();
        for ld in element_dofs {
            slot_start.push(slots.len());
            for &gi in ld {
                for &gj in ld {
                    let slot = match (index(gi), index(gj)) {
                        (Some(i), Some(j)) if stored(gi, gj) => {
                            let col = &row_idx[col_ptr[j]..col_ptr[j + 1]];
                            (col_ptr[j] + col.binary_search(&i).expect("entry in pattern")) as u32
                        }
                        _ => SKIP,
                    };
                    slots.push(slot);
                }
            }
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            slot_start,
            slots,
        })
    }

    /// Add one element's block into `values` and `rhs`; entries coupling to
    /// constrained unknowns are moved to the right-hand side.
    fn scatter(
        &self,
        e: usize,
        blk: &LocalBlock,
        index: impl Fn(usize) -> Option<usize>,
        dofs: &DofSystem,
        constrained_values: &[f64],
        values: &mut [f64],
        rhs: &mut [f64],
    ) {
        let n = blk.size();
        let slots = &self.slots[self.slot_start[e]..self.slot_start[e] + n * n];
        for (i, &gi) in blk.dofs.iter().enumerate() {
            let Some(fi) = index(gi) else { continue };
            let mut r = blk.rhs[i];
            for (j, &gj) in blk.dofs.iter().enumerate() {
                let v = blk.matrix[i * n + j];
                let s = slots[i * n + j];
                if s != SKIP {
                    values[s as usize] += v;
                } else if dofs.constrained[gj] {
                    r -= v * constrained_values[gj];
                }
            }
            rhs[fi] += r;
        }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    fn symbolic(&self) -> SymbolicSparseColMat<usize> {
        SymbolicSparseColMat::new_checked(self.n, self.n, self.col_ptr.clone(), None, self.row_idx.clone())
    }
}

/// Assembled system over free unknowns.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: SparseColMat<usize, f64>,
    pub rhs: Vec<f64>,
}

impl LinearSystem {
    /// `A x` for a free-unknown vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        csc_apply(&self.matrix, x)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        self.matrix.to_dense()
    }
}

fn csc_apply(a: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    let (sym, vals) = a.parts();
    let mut y = vec![0.0; sym.nrows()];
    let cp = sym.col_ptr();
    let ri = sym.row_idx();
    for j in 0..sym.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for p in cp[j]..cp[j + 1] {
            y[ri[p]] += vals[p] * xj;
        }
    }
    y
}

/// Element list and cached pattern for one discretization.
pub struct Assembler<'a> {
    pub ctx: FormContext<'a>,
    elements: Vec<Element>,
    pattern: SparsityPattern,
}

impl<'a> Assembler<'a> {
    pub fn new(ctx: FormContext<'a>) -> Result<Self> {
        ctx.dofs.check_mesh(ctx.mesh)?;
        ctx.params.validate(ctx.mesh)?;
        if ctx.re.k != ctx.dofs.k {
            return Err(HdgError::DofMismatch(format!(
                "reference tables for degree {}, numbering for degree {}",
                ctx.re.k, ctx.dofs.k
            )));
        }
        let elements = Element::all(ctx.mesh);
        let element_dofs: Vec<Vec<usize>> = elements.iter().map(|&e| ctx.element_dofs(e)).collect();
        let dofs = ctx.dofs;
        let pattern = SparsityPattern::build(
            dofs.n_free,
            &element_dofs,
            |g| dofs.free(g),
            |gi, gj| dofs.is_velocity(gi) || dofs.is_velocity(gj),
        )?;
        Ok(Self {
            ctx,
            elements,
            pattern,
        })
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Local blocks of every element, computed in parallel.
    pub fn local_blocks(&self, input: &StepInput) -> Vec<LocalBlock> {
        self.elements.par_iter().map(|&el| self.ctx.element(el, input)).collect()
    }

    /// Assemble over free unknowns. `constrained_values` is a full-length
    /// vector whose constrained entries hold the prescribed data.
    pub fn assemble(&self, input: &StepInput, constrained_values: &[f64]) -> LinearSystem {
        let dofs = self.ctx.dofs;
        let mut values = vec![0.0; self.pattern.nnz()];
        let mut rhs = vec![0.0; dofs.n_free];
        // Chunks bound the memory held by computed blocks.
        let chunk = 4096;
        for (ci, els) in self.elements.chunks(chunk).enumerate() {
            let blocks: Vec<LocalBlock> = els.par_iter().map(|&el| self.ctx.element(el, input)).collect();
            for (bi, blk) in blocks.iter().enumerate() {
                self.pattern
                    .scatter(ci * chunk + bi, blk, |g| dofs.free(g), dofs, constrained_values, &mut values, &mut rhs);
            }
        }
        LinearSystem {
            matrix: SparseColMat::new(self.pattern.symbolic(), values),
            rhs,
        }
    }

    /// Dense matrix of `terms` over all free unknowns (small meshes only).
    pub fn free_dense(&self, terms: Terms) -> Mat<f64> {
        let blocks = self.local_blocks(&StepInput::only(terms));
        scatter_free_dense(self.ctx.dofs, &blocks)
    }
}

/// Cell unknowns eliminated from one element block: `z = A_II^{-1} [A_IT | b_I]`.
struct Eliminated {
    /// Local positions of the cell unknowns and the traces in the full block.
    interior: Vec<usize>,
    traces: Vec<usize>,
    /// `interior.len() x (traces.len() + 1)`, row-major.
    z: Vec<f64>,
}

/// Assembly of the trace system obtained by eliminating the cell unknowns
/// of every cell (static condensation), and recovery of the cell unknowns.
pub struct CondensedAssembler<'a> {
    pub ctx: FormContext<'a>,
    elements: Vec<Element>,
    /// Trace unknowns of each element (all unknowns for interface facets).
    trace_dofs: Vec<Vec<usize>>,
    /// Global unknown -> row of the trace system, `usize::MAX` otherwise.
    trace_index: Vec<usize>,
    n: usize,
    pattern: SparsityPattern,
}

/// Trace system together with what is needed to recover the cell unknowns.
pub struct CondensedSystem {
    pub system: LinearSystem,
    eliminated: Vec<Option<Eliminated>>,
}

impl<'a> CondensedAssembler<'a> {
    pub fn new(ctx: FormContext<'a>) -> Result<Self> {
        let dofs = ctx.dofs;
        // Validation is shared with the monolithic assembler.
        let elements = Element::all(ctx.mesh);
        ctx.dofs.check_mesh(ctx.mesh)?;
        ctx.params.validate(ctx.mesh)?;
        if ctx.re.k != dofs.k {
            return Err(HdgError::DofMismatch(format!(
                "reference tables for degree {}, numbering for degree {}",
                ctx.re.k, dofs.k
            )));
        }
        let trace_dofs: Vec<Vec<usize>> = elements
            .iter()
            .map(|&e| ctx.element_dofs(e).into_iter().filter(|&g| !dofs.is_cell_unknown(g)).collect())
            .collect();
        let mut trace_index = vec![usize::MAX; dofs.n_total];
        let mut n = 0;
        for g in 0..dofs.n_total {
            if !dofs.is_cell_unknown(g) && !dofs.constrained[g] {
                trace_index[g] = n;
                n += 1;
            }
        }
        let idx = |g: usize| (trace_index[g] != usize::MAX).then_some(trace_index[g]);
        let pattern = SparsityPattern::build(n, &trace_dofs, idx, |_, _| true)?;
        Ok(Self {
            ctx,
            elements,
            trace_dofs,
            trace_index,
            n,
            pattern,
        })
    }

    pub fn trace_unknowns(&self) -> usize {
        self.n
    }

    fn index(&self, g: usize) -> Option<usize> {
        let i = self.trace_index[g];
        (i != usize::MAX).then_some(i)
    }

    /// Condense one element block; interface facets carry traces only.
    fn condense(&self, blk: LocalBlock) -> Result<(LocalBlock, Option<Eliminated>)> {
        let dofs = self.ctx.dofs;
        let n = blk.size();
        let interior: Vec<usize> = (0..n).filter(|&i| dofs.is_cell_unknown(blk.dofs[i])).collect();
        if interior.is_empty() {
            return Ok((blk, None));
        }
        let traces: Vec<usize> = (0..n).filter(|&i| !dofs.is_cell_unknown(blk.dofs[i])).collect();
        let (ni, nt) = (interior.len(), traces.len());
        let a_ii = Mat::from_fn(ni, ni, |r, c| blk.get(interior[r], interior[c]));
        let rhs = Mat::from_fn(ni, nt + 1, |r, c| {
            if c < nt {
                blk.get(interior[r], traces[c])
            } else {
                blk.rhs[interior[r]]
            }
        });
        let z = a_ii.partial_piv_lu().solve(&rhs);
        if (0..ni).any(|r| (0..=nt).any(|c| !z[(r, c)].is_finite())) {
            return Err(HdgError::SingularLocalSystem("cell block of the condensed system".into()));
        }
        let mut out = LocalBlock::zeros(traces.iter().map(|&i| blk.dofs[i]).collect());
        for (r, &ti) in traces.iter().enumerate() {
            let mut g = blk.rhs[ti];
            for (k, &ik) in interior.iter().enumerate() {
                g -= blk.get(ti, ik) * z[(k, nt)];
            }
            out.rhs[r] = g;
            for (c, &tj) in traces.iter().enumerate() {
                let mut v = blk.get(ti, tj);
                for (k, &ik) in interior.iter().enumerate() {
                    v -= blk.get(ti, ik) * z[(k, c)];
                }
                out.matrix[r * nt + c] = v;
            }
        }
        let zf = (0..ni).flat_map(|r| (0..=nt).map(move |c| (r, c))).map(|(r, c)| z[(r, c)]).collect();
        Ok((
            out,
            Some(Eliminated {
                interior,
                traces,
                z: zf,
            }),
        ))
    }

    pub fn assemble(&self, input: &StepInput, constrained_values: &[f64]) -> Result<CondensedSystem> {
        let dofs = self.ctx.dofs;
        let mut values = vec![0.0; self.pattern.nnz()];
        let mut rhs = vec![0.0; self.n];
        let mut eliminated = Vec::with_capacity(self.elements.len());
        let chunk = 4096;
        for (ci, els) in self.elements.chunks(chunk).enumerate() {
            let blocks: Vec<Result<(LocalBlock, Option<Eliminated>)>> =
                els.par_iter().map(|&el| self.condense(self.ctx.element(el, input))).collect();
            for (bi, b) in blocks.into_iter().enumerate() {
                let (blk, elim) = b?;
                let e = ci * chunk + bi;
                debug_assert_eq!(blk.dofs, self.trace_dofs[e]);
                self.pattern
                    .scatter(e, &blk, |g| self.index(g), dofs, constrained_values, &mut values, &mut rhs);
                eliminated.push(elim);
            }
        }
        Ok(CondensedSystem {
            system: LinearSystem {
                matrix: SparseColMat::new(self.pattern.symbolic(), values),
                rhs,
            },
            eliminated,
        })
    }

    /// Full coefficient vector from the trace solution and the constrained data.
    pub fn recover(&self, sys: &CondensedSystem, traces: &[f64], constrained_values: &[f64]) -> Vec<f64> {
        let dofs = self.ctx.dofs;
        let mut out: Vec<f64> = (0..dofs.n_total)
            .map(|g| match self.index(g) {
                Some(i) => traces[i],
                None => constrained_values[g],
            })
            .collect();
        for (e, elim) in sys.eliminated.iter().enumerate() {
            let Some(el) = elim else { continue };
            let full = self.ctx.element_dofs(self.elements[e]);
            let nt = el.traces.len();
            for (r, &ir) in el.interior.iter().enumerate() {
                let row = &el.z[r * (nt + 1)..(r + 1) * (nt + 1)];
                let mut v = row[nt];
                for (c, &tc) in el.traces.iter().enumerate() {
                    v -= row[c] * out[full[tc]];
                }
                out[full[ir]] = v;
            }
        }
        out
    }
}

/// Sum local blocks into a dense matrix over the free unknowns.
pub fn scatter_free_dense<'b>(dofs: &DofSystem, blocks: impl IntoIterator<Item = &'b LocalBlock>) -> Mat<f64> {
    let mut a = Mat::<f64>::zeros(dofs.n_free, dofs.n_free);
    for blk in blocks {
        let n = blk.size();
        for (i, &gi) in blk.dofs.iter().enumerate() {
            let Some(fi) = dofs.free(gi) else { continue };
            for (j, &gj) in blk.dofs.iter().enumerate() {
                if let Some(fj) = dofs.free(gj) {
                    a[(fi, fj)] += blk.matrix[i * n + j];
                }
            }
        }
    }
    a
}

/// Full-length vector holding the strongly imposed data at time `t`: the
/// prescribed free-flow velocity on velocity-data facets (zero on the other
/// constrained free-flow facets) and the porous pressure on pressure-data facets.
pub fn constrained_values(mesh: &Mesh, dofs: &DofSystem, re: &ReferenceElement, data: &dyn FlowData, t: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dofs.n_total];
    let qdeg = crate::femlib::facet_quadrature_degree(dofs.k);
    for (f, facet) in mesh.facets.iter().enumerate() {
        match facet.tag {
            FacetTag::GammaSD => {
                let o = dofs.facet_velocity(f).expect("boundary trace");
                if dofs.constrained[o] {
                    let c = l2_project_facet_vector(mesh, f, &re.trace, qdeg, |x| data.velocity_s_data(x, t))?;
                    out[o..o + c.len()].copy_from_slice(&c);
                }
            }
            FacetTag::GammaDD => {
                let o = dofs.facet_pressure_d(f).expect("boundary trace");
                if dofs.constrained[o] {
                    let c = l2_project_facet(mesh, f, &re.trace, qdeg, |x| data.pressure_d_data(x, t))?;
                    out[o..o + c.len()].copy_from_slice(&c);
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Scatter a free-unknown solution and the constrained data into one vector.
pub fn expand_solution(dofs: &DofSystem, free: &[f64], constrained_values: &[f64]) -> Vec<f64> {
    (0..dofs.n_total)
        .map(|g| match dofs.free(g) {
            Some(i) => free[i],
            None => constrained_values[g],
        })
        .collect()
}

/// Relative residual targeted when iterating with a factorization of an
/// earlier matrix.
const REUSE_TOLERANCE: f64 = 1e-12;

/// Sweeps allowed with an earlier factorization before refactoring.
const REUSE_SWEEPS: usize = 8;

/// Sparse LU with the symbolic analysis kept for later systems of the same
/// pattern.
///
/// With `reuse` on, the last numeric factorization preconditions a
/// stationary iteration on the next system. Between nearby time steps the
/// matrices differ only through the lagged convection, so a few cheap
/// triangular solves replace a refactorization. A fresh factorization is
/// computed whenever the iteration stalls.
#[derive(Default)]
pub struct DirectSolver {
    symbolic: Option<SymbolicLu<usize>>,
    factor: Option<Lu<usize, f64>>,
    reuse: bool,
    factorizations: usize,
}

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solver that keeps its numeric factorization across calls.
    pub fn reusing() -> Self {
        Self {
            reuse: true,
            ..Self::default()
        }
    }

    /// Numeric factorizations computed so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    pub fn solve(&mut self, system: &LinearSystem) -> Result<Vec<f64>> {
        if self.reuse {
            if let Some(lu) = &self.factor {
                if let Some(x) = iterate_with(lu, &system.matrix, &system.rhs) {
                    return Ok(x);
                }
            }
        }
        let lu = self.factorize(&system.matrix)?;
        let x = refine_and_check(&system.matrix, &system.rhs, |r| lu_solve(&lu, r));
        if self.reuse {
            self.factor = Some(lu);
        }
        x
    }

    fn factorize(&mut self, a: &SparseColMat<usize, f64>) -> Result<Lu<usize, f64>> {
        if self.symbolic.is_none() {
            let sym = SymbolicLu::try_new(a.symbolic()).map_err(|e| HdgError::SingularMatrix(format!("{e:?}")))?;
            self.symbolic = Some(sym);
        }
        let sym = self.symbolic.clone().expect("symbolic factorization");
        self.factorizations += 1;
        Lu::try_new_with_symbolic(sym, a.as_ref()).map_err(|e| match e {
            LuError::SymbolicSingular { index } => HdgError::SingularMatrix(format!("no pivot at column {index}")),
            LuError::Generic(g) => HdgError::SingularMatrix(format!("{g:?}")),
        })
    }
}

fn lu_solve(lu: &Lu<usize, f64>, r: &[f64]) -> Vec<f64> {
    let mut m = Mat::from_fn(r.len(), 1, |i, _| r[i]);
    lu.solve_in_place(m.as_mut());
    (0..r.len()).map(|i| m[(i, 0)]).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &SparseColMat<usize, f64>, b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter().zip(csc_apply(a, x)).map(|(bi, ai)| bi - ai).collect()
}

/// Preconditioned Richardson iteration `x += M^{-1} (b - A x)` with an
/// earlier factorization `M`. `None` when it does not reach
/// `REUSE_TOLERANCE` or contracts too slowly.
fn iterate_with(lu: &Lu<usize, f64>, a: &SparseColMat<usize, f64>, b: &[f64]) -> Option<Vec<f64>> {
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Some(vec![0.0; b.len()]);
    }
    let mut x = vec![0.0; b.len()];
    let mut rel = 1.0;
    for _ in 0..REUSE_SWEEPS {
        let dx = lu_solve(lu, &residual(a, b, &x));
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        let next = norm(&residual(a, b, &x)) / bnorm;
        if !next.is_finite() || next > 0.5 * rel {
            return None;
        }
        rel = next;
        if rel <= REUSE_TOLERANCE {
            return Some(x);
        }
    }
    None
}

/// Solve with a factorization, apply up to three refinement sweeps, and
/// require the relative residual to meet `SOLVE_TOLERANCE`.
fn refine_and_check(a: &SparseColMat<usize, f64>, b: &[f64], solve: impl Fn(&[f64]) -> Vec<f64>) -> Result<Vec<f64>> {
    let bnorm = norm(b);
    let mut x = solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(HdgError::SingularMatrix("factorization produced non-finite values".into()));
    }
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = residual(a, b, &x);
    let mut rel = norm(&r) / bnorm;
    for _ in 0..3 {
        if rel <= 1e-14 {
            break;
        }
        let dx = solve(&r);
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let rt = residual(a, b, &trial);
        let rel_t = norm(&rt) / bnorm;
        if rel_t >= rel {
            break;
        }
        x = trial;
        r = rt;
        rel = rel_t;
    }
    if !rel.is_finite() || rel > SOLVE_TOLERANCE {
        return Err(HdgError::InaccurateSolve(rel));
    }
    Ok(x)
}

/// One-shot sparse solve.
pub fn solve(a: &SparseColMat<usize, f64>, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(HdgError::InvalidParameter(format!(
            "system is {}x{} with a right-hand side of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let mut s = DirectSolver::new();
    s.solve(&LinearSystem {
        matrix: a.clone(),
        rhs: b.to_vec(),
    })
}

fn check_probe_size(mesh: &Mesh) -> Result<()> {
    if mesh.num_cells() > PROBE_CELL_LIMIT {
        return Err(HdgError::MeshTooLarge {
            cells: mesh.num_cells(),
            limit: PROBE_CELL_LIMIT,
        });
    }
    Ok(())
}

fn submatrix(a: &Mat<f64>, rows: &[usize], cols: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Free indices (positions among free unknowns) of the free velocity and
/// free pressure unknowns.
fn free_split(dofs: &DofSystem) -> (Vec<usize>, Vec<usize>) {
    let v = dofs.free_velocity_dofs().iter().map(|&g| dofs.free(g).unwrap()).collect();
    let p = dofs.free_pressure_dofs().iter().map(|&g| dofs.free(g).unwrap()).collect();
    (v, p)
}

/// Smallest generalized singular value of the velocity-pressure coupling,
/// `min_q sup_v b(v, q) / (|||v|||_v |||q|||_p)`.
pub fn infsup_probe(mesh: &Mesh, dofs: &DofSystem, params: &PhysicalParams) -> Result<f64> {
    check_probe_size(mesh)?;
    let re = ReferenceElement::new(dofs.k)?;
    let data = crate::scenarios::ZeroData { initial: |_| [0.0; 2] };
    let ctx = FormContext {
        mesh,
        dofs,
        re: &re,
        params,
        data: &data,
    };
    let asm = Assembler::new(ctx)?;
    let coupling = asm.free_dense(Terms::COUPLING);
    let norms = crate::diagnostics::NormBlocks::new(mesh, dofs, &re)?;
    let vnorm = scatter_free_dense(dofs, norms.velocity());
    let pnorm = scatter_free_dense(dofs, norms.pressure());
    let (vi, pi) = free_split(dofs);
    let b = submatrix(&coupling, &pi, &vi);
    let v = submatrix(&vnorm, &vi, &vi);
    let q = submatrix(&pnorm, &pi, &pi);
    let v_llt = v.llt(Side::Lower).map_err(|e| HdgError::DenseFailure(format!("velocity norm: {e:?}")))?;
    let q_llt = q.llt(Side::Lower).map_err(|e| HdgError::DenseFailure(format!("pressure norm: {e:?}")))?;
    // Singular values of L_q^{-1} B L_v^{-T}, taken directly rather than as
    // square roots of eigenvalues so a kernel shows up at rounding level.
    let mut c = b;
    q_llt.L().solve_lower_triangular_in_place(c.as_mut());
    let mut ct = c.transpose().to_owned();
    v_llt.L().solve_lower_triangular_in_place(ct.as_mut());
    let sv = ct
        .singular_values()
        .map_err(|e| HdgError::DenseFailure(format!("{e:?}")))?;
    Ok(sv.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Eigenvalues (ascending) of the symmetric part of the linear velocity
/// form on the free velocity unknowns.
pub fn coercivity_spectrum(mesh: &Mesh, dofs: &DofSystem, params: &PhysicalParams) -> Result<Vec<f64>> {
    check_probe_size(mesh)?;
    let re = ReferenceElement::new(dofs.k)?;
    let data = crate::scenarios::ZeroData { initial: |_| [0.0; 2] };
    let ctx = FormContext {
        mesh,
        dofs,
        re: &re,
        params,
        data: &data,
    };
    let asm = Assembler::new(ctx)?;
    let a = asm.free_dense(Terms::LINEAR_VELOCITY);
    let (vi, _) = free_split(dofs);
    let av = submatrix(&a, &vi, &vi);
    let sym = Mat::from_fn(av.nrows(), av.ncols(), |i, j| 0.5 * (av[(i, j)] + av[(j, i)]));
    let mut eig = sym
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| HdgError::DenseFailure(format!("{e:?}")))?;
    eig.sort_by(|a, b| a.total_cmp(b));
    Ok(eig)
}
