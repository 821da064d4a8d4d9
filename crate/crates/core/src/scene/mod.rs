//! Gaussian scene representation.

pub mod camera;
pub mod sh;

pub use camera::Camera;

use crate::error::{Result, SplatError};
use crate::linalg::{quat_to_rotation, Mat3, Vec3};
use crate::scalar::{sigmoid, Real};

use self::sh::coeff_count;

/// One Gaussian in its optimizable parameterization.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian<T> {
    pub center: Vec3<T>,
    /// Per-axis log of the standard deviation.
    pub log_scale: Vec3<T>,
    /// Rotation quaternion `(w, x, y, z)`.
    pub rotation: [T; 4],
    pub opacity_logit: T,
    /// `coeff_count(sh_degree)` RGB triples, DC first.
    pub sh: Vec<[T; 3]>,
}

impl<T: Real> Gaussian<T> {
    pub fn opacity(&self) -> T {
        sigmoid(self.opacity_logit)
    }

    pub fn covariance(&self) -> Mat3<T> {
        covariance_from_params(&self.log_scale, self.rotation)
    }
}

/// Structure-of-arrays storage for `N` Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSet<T> {
    pub centers: Vec<Vec3<T>>,
    pub log_scales: Vec<Vec3<T>>,
    pub rotations: Vec<[T; 4]>,
    pub opacity_logits: Vec<T>,
    /// Row-major `N x coeff_count(sh_degree)` RGB triples.
    pub sh: Vec<[T; 3]>,
    sh_degree: usize,
    active_sh_degree: usize,
}

impl<T: Real> GaussianSet<T> {
    pub fn new(sh_degree: usize) -> Self {
        assert!(
            sh_degree <= sh::MAX_SH_DEGREE,
            "SH degree {sh_degree} above 3"
        );
        Self {
            centers: Vec::new(),
            log_scales: Vec::new(),
            rotations: Vec::new(),
            opacity_logits: Vec::new(),
            sh: Vec::new(),
            sh_degree,
            active_sh_degree: sh_degree,
        }
    }

    pub fn with_capacity(sh_degree: usize, n: usize) -> Self {
        let mut set = Self::new(sh_degree);
        set.centers.reserve(n);
        set.log_scales.reserve(n);
        set.rotations.reserve(n);
        set.opacity_logits.reserve(n);
        set.sh.reserve(n * coeff_count(sh_degree));
        set
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn sh_degree(&self) -> usize {
        self.sh_degree
    }

    pub fn active_sh_degree(&self) -> usize {
        self.active_sh_degree
    }

    /// Sets the number of SH bands used for rendering, capped at the stored degree.
    pub fn set_active_sh_degree(&mut self, degree: usize) {
        self.active_sh_degree = degree.min(self.sh_degree);
    }

    pub fn coeffs_per_gaussian(&self) -> usize {
        coeff_count(self.sh_degree)
    }

    pub fn sh_of(&self, i: usize) -> &[[T; 3]] {
        let k = self.coeffs_per_gaussian();
        &self.sh[i * k..(i + 1) * k]
    }

    pub fn sh_of_mut(&mut self, i: usize) -> &mut [[T; 3]] {
        let k = self.coeffs_per_gaussian();
        &mut self.sh[i * k..(i + 1) * k]
    }

    pub fn opacity(&self, i: usize) -> T {
        sigmoid(self.opacity_logits[i])
    }

    pub fn scale(&self, i: usize) -> Vec3<T> {
        self.log_scales[i].map(|s| s.exp())
    }

    pub fn covariance(&self, i: usize) -> Mat3<T> {
        covariance_from_params(&self.log_scales[i], self.rotations[i])
    }

    /// Appends a Gaussian. Missing SH bands are zero-filled and extra ones dropped.
    pub fn push(&mut self, g: Gaussian<T>) {
        self.centers.push(g.center);
        self.log_scales.push(g.log_scale);
        self.rotations.push(g.rotation);
        self.opacity_logits.push(g.opacity_logit);
        let k = self.coeffs_per_gaussian();
        for j in 0..k {
            self.sh.push(g.sh.get(j).copied().unwrap_or([T::zero(); 3]));
        }
    }

    pub fn get(&self, i: usize) -> Gaussian<T> {
        Gaussian {
            center: self.centers[i],
            log_scale: self.log_scales[i],
            rotation: self.rotations[i],
            opacity_logit: self.opacity_logits[i],
            sh: self.sh_of(i).to_vec(),
        }
    }

    /// Copies row `i` of `other` (which must share the SH degree) onto the end.
    pub fn push_row_from(&mut self, other: &Self, i: usize) {
        debug_assert_eq!(self.sh_degree, other.sh_degree);
        self.centers.push(other.centers[i]);
        self.log_scales.push(other.log_scales[i]);
        self.rotations.push(other.rotations[i]);
        self.opacity_logits.push(other.opacity_logits[i]);
        self.sh.extend_from_slice(other.sh_of(i));
    }

    /// New set holding the rows listed in `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.sh_degree, indices.len());
        out.active_sh_degree = self.active_sh_degree;
        for &i in indices {
            out.push_row_from(self, i);
        }
        out
    }

    /// Keeps the rows where `keep` is true, preserving order.
    pub fn retain_mask(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.len() {
            return Err(SplatError::ShapeMismatch {
                what: "keep mask",
                expected: self.len(),
                got: keep.len(),
            });
        }
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        Ok(self.gather(&idx))
    }

    /// Normalizes every rotation quaternion to unit length.
    pub fn normalize_rotations(&mut self) {
        for q in self.rotations.iter_mut() {
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            if n > T::zero() {
                *q = q.map(|v| v / n);
            } else {
                *q = [T::one(), T::zero(), T::zero(), T::zero()];
            }
        }
    }

    /// Checks that every parallel array has a consistent length.
    pub fn check_consistent(&self) -> Result<()> {
        let n = self.len();
        let checks = [
            ("log_scales", self.log_scales.len(), n),
            ("rotations", self.rotations.len(), n),
            ("opacity_logits", self.opacity_logits.len(), n),
            ("sh", self.sh.len(), n * self.coeffs_per_gaussian()),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(SplatError::ShapeMismatch {
                    what,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Same set with a different stored SH degree; bands are truncated or zero-padded.
    pub fn with_sh_degree(&self, degree: usize) -> Self {
        let mut out = Self::with_capacity(degree, self.len());
        for i in 0..self.len() {
            out.push(self.get(i));
        }
        out.active_sh_degree = self.active_sh_degree.min(degree);
        out
    }

    pub fn cast<U: Real>(&self) -> GaussianSet<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        GaussianSet {
            centers: self.centers.iter().map(|v| v.cast()).collect(),
            log_scales: self.log_scales.iter().map(|v| v.cast()).collect(),
            rotations: self.rotations.iter().map(|q| q.map(c)).collect(),
            opacity_logits: self.opacity_logits.iter().map(|&v| c(v)).collect(),
            sh: self.sh.iter().map(|v| v.map(c)).collect(),
            sh_degree: self.sh_degree,
            active_sh_degree: self.active_sh_degree,
        }
    }
}

/// `R(q) diag(exp(s))^2 R(q)^T`, built so the result is exactly symmetric.
pub fn covariance_from_params<T: Real>(log_scale: &Vec3<T>, rotation: [T; 4]) -> Mat3<T> {
    let r = quat_to_rotation(rotation);
    let s = log_scale.map(|v| v.exp());
    let mut m = r;
    for row in m.0.iter_mut() {
        for j in 0..3 {
            row[j] *= s[j];
        }
    }
    let mut cov = Mat3::zero();
    for i in 0..3 {
        for j in i..3 {
            let v = m.0[i][0] * m.0[j][0] + m.0[i][1] * m.0[j][1] + m.0[i][2] * m.0[j][2];
            cov.0[i][j] = v;
            cov.0[j][i] = v;
        }
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_mat_close(a: &Mat3<f64>, b: [[f64; 3]; 3], tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.0[i][j] - b[i][j]).abs() < tol, "{:?} vs {:?}", a.0, b);
            }
        }
    }

    #[test]
    fn unit_covariance() {
        let c = covariance_from_params(&Vec3::zero(), [1.0f64, 0.0, 0.0, 0.0]);
        assert_mat_close(
            &c,
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            1e-15,
        );
    }

    #[test]
    fn axis_aligned_scaling() {
        let s = Vec3::new(2f64.ln(), 0.0, 0.0);
        let c = covariance_from_params(&s, [1.0, 0.0, 0.0, 0.0]);
        assert_mat_close(
            &c,
            [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            1e-14,
        );
    }

    #[test]
    fn rotated_scaling_about_z() {
        // 90 degrees about z maps the x axis to y, so the long axis moves to y.
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = Vec3::new(2f64.ln(), 0.0, 0.0);
        let c = covariance_from_params(&s, [h, 0.0, 0.0, h]);
        assert_mat_close(
            &c,
            [[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]],
            1e-14,
        );
    }

    #[test]
    fn unnormalized_quaternion_is_normalized() {
        let s = Vec3::new(0.1f64, -0.3, 0.5);
        let a = covariance_from_params(&s, [0.5, 0.1, -0.2, 0.3]);
        let b = covariance_from_params(&s, [1.0, 0.2, -0.4, 0.6]);
        assert_mat_close(&a, b.0, 1e-14);
    }

    /// Symmetric 3x3 eigenvalues via the trigonometric closed form.
    fn sym_eigenvalues(m: &Mat3<f64>) -> [f64; 3] {
        let a = &m.0;
        let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = Mat3([
            [(a[0][0] - q) / p, a[0][1] / p, a[0][2] / p],
            [a[1][0] / p, (a[1][1] - q) / p, a[1][2] / p],
            [a[2][0] / p, a[2][1] / p, (a[2][2] - q) / p],
        ]);
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let mut e = [e1, 3.0 * q - e1 - e3, e3];
        e.sort_by(|x, y| x.partial_cmp(y).unwrap());
        e
    }

    #[test]
    fn covariance_is_symmetric_with_scale_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s: Vec3<f64> = Vec3::new(
                rng.random_range(-2.0..1.0),
                rng.random_range(-2.0..1.0),
                rng.random_range(-2.0..1.0),
            );
            let q: [f64; 4] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let c = covariance_from_params(&s, q);
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(c.0[i][j].to_bits(), c.0[j][i].to_bits());
                }
            }
            let mut want = s.0.map(|v| (2.0 * v).exp());
            want.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let got = sym_eigenvalues(&c);
            for k in 0..3 {
                assert!(
                    (got[k] - want[k]).abs() <= 1e-6 * want[k],
                    "{got:?} vs {want:?}"
                );
            }
        }
    }

    #[test]
    fn gather_and_retain() {
        let mut set = GaussianSet::<f32>::new(1);
        for i in 0..5 {
            set.push(Gaussian {
                center: Vec3::new(i as f32, 0.0, 0.0),
                log_scale: Vec3::zero(),
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity_logit: i as f32,
                sh: vec![[i as f32; 3]],
            });
        }
        set.check_consistent().unwrap();
        let kept = set.retain_mask(&[true, false, true, false, true]).unwrap();
        assert_eq!(kept.len(), 3);
        assert_eq!(kept.opacity_logits, vec![0.0, 2.0, 4.0]);
        assert_eq!(kept.sh_of(1)[0], [2.0; 3]);
        assert_eq!(kept.sh_of(1)[1], [0.0; 3]);
        assert!(set.retain_mask(&[true]).is_err());
    }

    #[test]
    fn active_degree_is_capped() {
        let mut set = GaussianSet::<f64>::new(2);
        set.set_active_sh_degree(3);
        assert_eq!(set.active_sh_degree(), 2);
        set.set_active_sh_degree(0);
        assert_eq!(set.active_sh_degree(), 0);
    }
}
