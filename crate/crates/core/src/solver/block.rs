//! Two-by-two block systems and their inverse through the Schur complement
//! of the lower-right block.

use nalgebra::DMatrix;

use crate::error::{invalid, JdiError, Result};
use crate::linalg::PivotedLu;

/// `[[Ȧ, Ḃ], [Ċ, Ḋ]]` with `Ȧ: M×M`, `Ḃ: M×N`, `Ċ: N×M`, `Ḋ: N×N`.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl BlockSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let (m, n) = (a.nrows(), d.nrows());
        if !a.is_square() || !d.is_square() || b.shape() != (m, n) || c.shape() != (n, m) {
            return Err(invalid(format!(
                "inconsistent block shapes A{:?} B{:?} C{:?} D{:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn upper_size(&self) -> usize {
        self.a.nrows()
    }

    pub fn lower_size(&self) -> usize {
        self.d.nrows()
    }

    /// The full `(M+N)×(M+N)` matrix.
    pub fn assembled(&self) -> DMatrix<f64> {
        let (m, n) = (self.upper_size(), self.lower_size());
        let mut full = DMatrix::zeros(m + n, m + n);
        full.view_mut((0, 0), (m, m)).copy_from(&self.a);
        full.view_mut((0, m), (m, n)).copy_from(&self.b);
        full.view_mut((m, 0), (n, m)).copy_from(&self.c);
        full.view_mut((m, m), (n, n)).copy_from(&self.d);
        full
    }

    /// `Ṗ = (Ȧ − Ḃ Ḋ⁻¹ Ċ)⁻¹`.
    pub fn schur_p(&self) -> Result<DMatrix<f64>> {
        let d_lu = PivotedLu::new(&self.d, "lower-right block").map_err(singular)?;
        schur_inverse(self, &d_lu)
    }
}

fn singular(e: JdiError) -> JdiError {
    match e {
        JdiError::SingularBlock(msg) => JdiError::SingularBlock(msg),
        other => JdiError::SingularBlock(other.to_string()),
    }
}

fn schur_inverse(sys: &BlockSystem, d_lu: &PivotedLu) -> Result<DMatrix<f64>> {
    let schur = &sys.a - &sys.b * d_lu.solve_mat(&sys.c);
    Ok(PivotedLu::new(&schur, "schur complement")?.inverse())
}

/// Inverse of the assembled system from its blocks:
///
/// ```text
/// [ Ṗ           −Ṗ Ḃ Ḋ⁻¹             ]
/// [ −Ḋ⁻¹ Ċ Ṗ    Ḋ⁻¹ + Ḋ⁻¹ Ċ Ṗ Ḃ Ḋ⁻¹ ]
/// ```
pub fn block_inverse(sys: &BlockSystem) -> Result<DMatrix<f64>> {
    let (m, n) = (sys.upper_size(), sys.lower_size());
    let d_lu = PivotedLu::new(&sys.d, "lower-right block")?;
    let p = schur_inverse(sys, &d_lu)?;
    let d_inv = d_lu.inverse();
    let b_dinv = &sys.b * &d_inv;
    let dinv_c = &d_inv * &sys.c;
    let upper_right = -(&p * &b_dinv);
    let lower_left = -(&dinv_c * &p);
    let lower_right = &d_inv + &dinv_c * &p * &b_dinv;

    let mut inv = DMatrix::zeros(m + n, m + n);
    inv.view_mut((0, 0), (m, m)).copy_from(&p);
    inv.view_mut((0, m), (m, n)).copy_from(&upper_right);
    inv.view_mut((m, 0), (n, m)).copy_from(&lower_left);
    inv.view_mut((m, m), (n, n)).copy_from(&lower_right);
    Ok(inv)
}
