//! Pauli-basis state tomography by linear inversion with eigenvalue clipping.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::device::{run_from, DeviceModel, Program};
use crate::error::{StateError, TomographyError};
use crate::measurement::{measure_probs, mitigate, sample_shots, ConfusionModel, Distribution, ShotCounts};
use crate::qstate::{
    c, conjugate_local, fidelity, partial_trace, pauli_expectation, CMatrix, DensityMatrix, Pauli, PauliLabel,
    PureState,
};

pub const MAX_TOMO_QUBITS: usize = 5;

/// Per-qubit measurement bases, letter `i` for target `i`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Setting(Vec<Pauli>);

impl Setting {
    pub fn new(bases: Vec<Pauli>) -> Result<Self, TomographyError> {
        if bases.is_empty() || bases.len() > MAX_TOMO_QUBITS {
            return Err(TomographyError::QubitCount(bases.len()));
        }
        if bases.contains(&Pauli::I) {
            return Err(StateError::BadPauli(bases.iter().map(|p| p.letter()).collect()).into());
        }
        Ok(Self(bases))
    }

    pub fn bases(&self) -> &[Pauli] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether this setting measures every non-identity letter of `label`.
    pub fn covers(&self, label: &PauliLabel) -> bool {
        label.letters().iter().zip(&self.0).all(|(p, s)| *p == Pauli::I || p == s)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|p| write!(f, "{}", p.letter()))
    }
}

impl FromStr for Setting {
    type Err = TomographyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bases = s
            .chars()
            .map(Pauli::from_letter)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| StateError::BadPauli(s.to_string()))?;
        Setting::new(bases)
    }
}

impl TryFrom<String> for Setting {
    type Error = TomographyError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Setting> for String {
    fn from(s: Setting) -> Self {
        s.to_string()
    }
}

/// All `3^n` settings in lexicographic order of their letters.
pub fn build_settings(n: usize) -> Result<Vec<Setting>, TomographyError> {
    if n == 0 || n > MAX_TOMO_QUBITS {
        return Err(TomographyError::QubitCount(n));
    }
    let letters = [Pauli::X, Pauli::Y, Pauli::Z];
    Ok((0..3usize.pow(n as u32))
        .map(|mut i| {
            let mut v = vec![Pauli::Z; n];
            for slot in v.iter_mut().rev() {
                *slot = letters[i % 3];
                i /= 3;
            }
            Setting(v)
        })
        .collect())
}

/// Circuits needed for `variants` programs tomographed on `n` qubits.
pub fn circuit_total(n: usize, variants: usize) -> usize {
    3usize.pow(n as u32) * variants
}

/// Pre-measurement rotation taking the basis's +1 eigenstate to `|0>`.
pub fn basis_rotation(basis: Pauli) -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match basis {
        Pauli::X => CMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]),
        // H * S^dagger
        Pauli::Y => CMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(0.0, -h), c(h, 0.0), c(0.0, h)]),
        Pauli::Z | Pauli::I => CMatrix::identity(2, 2),
    }
}

pub fn rotate_for_setting(rho: &DensityMatrix, setting: &Setting) -> Result<DensityMatrix, TomographyError> {
    if setting.len() != rho.n_qubits() {
        return Err(StateError::DimensionMismatch { left: setting.len(), right: rho.n_qubits() }.into());
    }
    let mut m = rho.matrix().clone();
    for (q, b) in setting.bases().iter().enumerate() {
        if *b != Pauli::Z {
            m = conjugate_local(&m, &basis_rotation(*b), &[q]);
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(rho.n_qubits(), m)?)
}

/// Outcome distribution of one setting; `qubits` names the device qubits
/// of `rho` for the readout model.
pub fn setting_distribution(
    rho: &DensityMatrix,
    setting: &Setting,
    readout: &ConfusionModel,
    qubits: &[usize],
) -> Result<Distribution, TomographyError> {
    let rotated = rotate_for_setting(rho, setting)?;
    Ok(measure_probs(&rotated, readout, qubits)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomographyJob {
    qubits: Vec<usize>,
    program: Program,
    settings: Vec<Setting>,
    shots: u64,
}

impl TomographyJob {
    pub fn new(qubits: Vec<usize>, program: Program, shots: u64) -> Result<Self, TomographyError> {
        let settings = build_settings(qubits.len())?;
        if shots == 0 {
            return Err(crate::error::MeasurementError::InvalidCounts("shots must be positive".into()).into());
        }
        let mut sorted = qubits.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != qubits.len() {
            return Err(StateError::BadQubits(format!("{qubits:?} repeats a qubit")).into());
        }
        Ok(Self { qubits, program, settings, shots })
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn settings(&self) -> &[Setting] {
        &self.settings
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn circuits(&self) -> usize {
        self.settings.len()
    }

    /// Exact pre-measurement state of the target qubits, in target order.
    pub fn target_state(&self, device: &DeviceModel) -> Result<DensityMatrix, TomographyError> {
        let mut register = self.program.register();
        register.extend(self.qubits.iter().copied());
        register.sort_unstable();
        register.dedup();
        if register.len() > crate::qstate::MAX_QUBITS {
            return Err(crate::error::DeviceError::RegisterTooLarge(register.len()).into());
        }
        let initial = DensityMatrix::basis(register.len(), 0)?;
        let rho = run_from(device, &self.program, &register, &initial)?;
        let keep: Vec<usize> = self
            .qubits
            .iter()
            .map(|q| register.iter().position(|r| r == q).expect("register holds targets"))
            .collect();
        Ok(partial_trace(&rho, &keep)?)
    }

    /// Noise-exact outcome distribution for every setting.
    pub fn simulate(&self, device: &DeviceModel) -> Result<BTreeMap<Setting, Distribution>, TomographyError> {
        let rho = self.target_state(device)?;
        self.settings
            .iter()
            .map(|s| Ok((s.clone(), setting_distribution(&rho, s, device.readout(), &self.qubits)?)))
            .collect()
    }

    /// Sampled counts per setting; setting `i` uses a seed derived from `seed`.
    pub fn sample(&self, device: &DeviceModel, seed: u64) -> Result<Vec<SettingRecord>, TomographyError> {
        let exact = self.simulate(device)?;
        self.settings
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let counts = sample_shots(&exact[s], self.shots, crate::characterize::experiment_seed(seed, i))?;
                Ok(SettingRecord { setting: s.clone(), counts })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRecord {
    pub setting: Setting,
    pub counts: ShotCounts,
}

/// `<P>` for every label, indexed by [`PauliLabel::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct Expectations {
    n_qubits: usize,
    values: Vec<f64>,
    settings_used: usize,
    shots_per_setting: Option<u64>,
}

impl Expectations {
    pub fn new(n_qubits: usize, values: Vec<f64>) -> Result<Self, TomographyError> {
        if n_qubits == 0 || n_qubits > MAX_TOMO_QUBITS {
            return Err(TomographyError::QubitCount(n_qubits));
        }
        let expected = 1 << (2 * n_qubits);
        if values.len() != expected {
            return Err(TomographyError::IncompleteLabels { expected, got: values.len() });
        }
        Ok(Self { n_qubits, values, settings_used: 0, shots_per_setting: None })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, label: &PauliLabel) -> f64 {
        self.values[label.index()]
    }

    pub fn max_abs_diff(&self, other: &Expectations) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Exact `Tr(P rho)` for every label.
pub fn exact_expectations(rho: &DensityMatrix) -> Result<Expectations, TomographyError> {
    let n = rho.n_qubits();
    let values = PauliLabel::all(n).map(|l| pauli_expectation(rho, &l)).collect::<Result<Vec<_>, _>>()?;
    Expectations::new(n, values)
}

fn parity_expectation(dist: &[f64], label: &PauliLabel) -> f64 {
    let mask = label
        .letters()
        .iter()
        .enumerate()
        .fold(0usize, |m, (q, p)| if *p == Pauli::I { m } else { m | (1 << q) });
    dist.iter()
        .enumerate()
        .map(|(b, p)| if (b & mask).count_ones() % 2 == 0 { *p } else { -*p })
        .sum()
}

/// Averages the parity estimate of each label over all settings that
/// measure it; `dists` must hold every setting.
pub fn expectations_from_distributions(
    n: usize,
    dists: &BTreeMap<Setting, Distribution>,
) -> Result<Expectations, TomographyError> {
    let settings = build_settings(n)?;
    for s in &settings {
        let d = dists.get(s).ok_or_else(|| TomographyError::MissingSetting(s.to_string()))?;
        if d.qubits().len() != n {
            return Err(TomographyError::WidthMismatch { setting: s.to_string(), expected: n, got: d.qubits().len() });
        }
    }
    let values = PauliLabel::all(n)
        .map(|label| {
            if label.index() == 0 {
                return 1.0;
            }
            let (sum, count) = settings
                .iter()
                .filter(|s| s.covers(&label))
                .fold((0.0, 0usize), |(acc, k), s| (acc + parity_expectation(dists[s].probs(), &label), k + 1));
            sum / count as f64
        })
        .collect();
    let mut e = Expectations::new(n, values)?;
    e.settings_used = settings.len();
    Ok(e)
}

/// Expectations from sampled counts; `qubits` fixes the bit order and
/// `mitigation`, when given, corrects each setting's frequencies first.
pub fn expectations_from_counts(
    qubits: &[usize],
    records: &[SettingRecord],
    mitigation: Option<&ConfusionModel>,
) -> Result<Expectations, TomographyError> {
    let n = qubits.len();
    let mut dists = BTreeMap::new();
    let mut shots = None;
    for r in records {
        if r.setting.len() != n || r.counts.qubits().len() != n {
            return Err(TomographyError::WidthMismatch {
                setting: r.setting.to_string(),
                expected: n,
                got: r.counts.qubits().len().min(r.setting.len()),
            });
        }
        let ordered = r.counts.marginal(qubits).map_err(|_| TomographyError::WidthMismatch {
            setting: r.setting.to_string(),
            expected: n,
            got: r.counts.qubits().len(),
        })?;
        let mut freq = ordered.frequencies();
        if let Some(model) = mitigation {
            freq = mitigate(&freq, model)?;
        }
        if dists.insert(r.setting.clone(), freq).is_some() {
            return Err(TomographyError::DuplicateSetting(r.setting.to_string()));
        }
        shots = Some(r.counts.total_shots());
    }
    let mut e = expectations_from_distributions(n, &dists)?;
    e.shots_per_setting = shots;
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Sum of the magnitudes of the negative eigenvalues that were zeroed.
    pub clipped_mass: f64,
    pub settings_used: usize,
    pub shots_per_setting: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReconRepr", into = "ReconRepr")]
pub struct ReconstructedState {
    pub rho: DensityMatrix,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize, Deserialize)]
struct ReconRepr {
    n_qubits: usize,
    /// Row-major `[re, im]` pairs.
    rho: Vec<Vec<[f64; 2]>>,
    diagnostics: Diagnostics,
}

impl TryFrom<ReconRepr> for ReconstructedState {
    type Error = StateError;

    fn try_from(r: ReconRepr) -> Result<Self, Self::Error> {
        let dim = r.rho.len();
        if r.rho.iter().any(|row| row.len() != dim) {
            return Err(StateError::Length { expected: dim, got: r.rho.iter().map(Vec::len).max().unwrap_or(0) });
        }
        let m = CMatrix::from_fn(dim, dim, |i, j| c(r.rho[i][j][0], r.rho[i][j][1]));
        Ok(Self { rho: DensityMatrix::new(r.n_qubits, m)?, diagnostics: r.diagnostics })
    }
}

impl From<ReconstructedState> for ReconRepr {
    fn from(s: ReconstructedState) -> Self {
        let m = s.rho.matrix();
        let rho = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
        ReconRepr { n_qubits: s.rho.n_qubits(), rho, diagnostics: s.diagnostics }
    }
}

/// Linear inversion `(1/2^n) sum_P <P> P`, then negative eigenvalues are
/// zeroed and the trace renormalized.
pub fn reconstruct(expectations: &Expectations) -> ReconstructedState {
    let n = expectations.n_qubits;
    let dim = 1usize << n;
    let mut m = CMatrix::zeros(dim, dim);
    for label in PauliLabel::all(n) {
        let v = expectations.get(&label);
        if v == 0.0 {
            continue;
        }
        let mask = label.flip_mask();
        for y in 0..dim {
            m[(y ^ mask, y)] += label.phase(y) * v;
        }
    }
    m /= c(dim as f64, 0.0);
    let herm = (&m + m.adjoint()) * c(0.5, 0.0);

    let eig = SymmetricEigen::new(herm);
    let clipped_mass: f64 = eig.eigenvalues.iter().filter(|l| **l < 0.0).map(|l| -l).sum();
    let kept: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let total: f64 = kept.iter().sum();
    let lambda = DVector::from_iterator(dim, kept.iter().map(|l| c(l / total, 0.0)));
    let v = &eig.eigenvectors;
    let mut rho = v * CMatrix::from_diagonal(&lambda) * v.adjoint();
    for i in 0..dim {
        rho[(i, i)].im = 0.0;
        for j in (i + 1)..dim {
            let avg = (rho[(i, j)] + rho[(j, i)].conj()) * 0.5;
            rho[(i, j)] = avg;
            rho[(j, i)] = avg.conj();
        }
    }
    let rho = DensityMatrix::from_matrix_unchecked(n, rho).expect("dimension matches");
    ReconstructedState {
        rho,
        diagnostics: Diagnostics {
            clipped_mass,
            settings_used: expectations.settings_used,
            shots_per_setting: expectations.shots_per_setting,
        },
    }
}

pub fn tomographic_fidelity(ideal: &PureState, recon: &ReconstructedState) -> Result<f64, TomographyError> {
    Ok(fidelity(ideal, &recon.rho)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{line_edges, make_line_like};
    use crate::noise::GateLabel;
    use crate::qstate::{random_density_matrix, random_pure_state, ZERO};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn perfect_distributions(rho: &DensityMatrix) -> BTreeMap<Setting, Distribution> {
        let n = rho.n_qubits();
        let qubits: Vec<usize> = (0..n).collect();
        let model = ConfusionModel::perfect(0..n);
        build_settings(n)
            .unwrap()
            .into_iter()
            .map(|s| {
                let d = setting_distribution(rho, &s, &model, &qubits).unwrap();
                (s, d)
            })
            .collect()
    }

    fn bell() -> PureState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(2, vec![c(h, 0.0), ZERO, ZERO, c(h, 0.0)]).unwrap()
    }

    #[test]
    fn setting_counts() {
        assert_eq!(build_settings(1).unwrap().len(), 3);
        assert_eq!(build_settings(2).unwrap().len(), 9);
        let five = build_settings(5).unwrap();
        assert_eq!(five.len(), 243);
        let unique: std::collections::BTreeSet<_> = five.iter().collect();
        assert_eq!(unique.len(), 243);
        assert_eq!(circuit_total(5, 31), 7533);
        assert!(build_settings(0).is_err());
        assert!(build_settings(6).is_err());
        assert_eq!(build_settings(2).unwrap()[0].to_string(), "XX");
        assert_eq!(build_settings(2).unwrap()[5].to_string(), "YZ");
    }

    #[test]
    fn basis_rotations_are_unitary_and_map_eigenstates() {
        for b in [Pauli::X, Pauli::Y, Pauli::Z] {
            let u = basis_rotation(b);
            assert!(crate::qstate::max_abs_diff(&(&u * u.adjoint()), &CMatrix::identity(2, 2)) < 1e-15);
            // U P U^dagger = Z
            let rotated = &u * b.matrix() * u.adjoint();
            assert!(crate::qstate::max_abs_diff(&rotated, &Pauli::Z.matrix()) < 1e-15);
        }
    }

    #[test]
    fn single_qubit_and_bell_expectations() {
        let zero = DensityMatrix::basis(1, 0).unwrap();
        let e = expectations_from_distributions(1, &perfect_distributions(&zero)).unwrap();
        assert!((e.get(&"Z".parse().unwrap()) - 1.0).abs() < 1e-12);
        assert!(e.get(&"X".parse().unwrap()).abs() < 1e-12);
        assert!(e.get(&"Y".parse().unwrap()).abs() < 1e-12);
        assert_eq!(e.get(&"I".parse().unwrap()), 1.0);

        let rho = bell().to_density();
        let e = expectations_from_distributions(2, &perfect_distributions(&rho)).unwrap();
        assert!((e.get(&"XX".parse().unwrap()) - 1.0).abs() < 1e-12);
        assert!((e.get(&"ZZ".parse().unwrap()) - 1.0).abs() < 1e-12);
        assert!((e.get(&"YY".parse().unwrap()) + 1.0).abs() < 1e-12);
        assert!(e.get(&"XZ".parse().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn parity_estimates_match_exact_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density_matrix(3, &mut rng).unwrap();
        let est = expectations_from_distributions(3, &perfect_distributions(&rho)).unwrap();
        assert!(est.max_abs_diff(&exact_expectations(&rho).unwrap()) < 1e-12);
    }

    #[test]
    fn missing_setting_is_an_error() {
        let mut d = perfect_distributions(&DensityMatrix::basis(2, 0).unwrap());
        d.remove(&"YX".parse().unwrap());
        assert_eq!(expectations_from_distributions(2, &d), Err(TomographyError::MissingSetting("YX".into())));
    }

    #[test]
    fn reconstruct_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let psi = random_pure_state(2, &mut rng).unwrap();
        let rec = reconstruct(&exact_expectations(&psi.to_density()).unwrap());
        assert!(rec.rho.max_abs_diff(&psi.to_density()) < 1e-10);

        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        let rec = reconstruct(&exact_expectations(&mixed).unwrap());
        assert!(rec.rho.max_abs_diff(&mixed) < 1e-12);
        assert!(rec.diagnostics.clipped_mass < 1e-12);
    }

    #[test]
    fn clipping_produces_a_valid_state() {
        // <Z> = 1 and <X> = 1 together are unphysical
        let e = Expectations::new(1, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let rec = reconstruct(&e);
        rec.rho.validate().unwrap();
        assert!(rec.diagnostics.clipped_mass > 0.1);
        assert!((rec.rho.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_tomography_of_random_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let psi = random_pure_state(2, &mut rng).unwrap();
        let rho = psi.to_density();
        let shots = 8192u64;
        let records: Vec<SettingRecord> = perfect_distributions(&rho)
            .into_iter()
            .enumerate()
            .map(|(i, (s, d))| SettingRecord { setting: s, counts: sample_shots(&d, shots, i as u64).unwrap() })
            .collect();
        let e = expectations_from_counts(&[0, 1], &records, None).unwrap();
        let exact = exact_expectations(&rho).unwrap();
        assert!(e.max_abs_diff(&exact) < 5.0 / (shots as f64).sqrt());
        let rec = reconstruct(&e);
        assert_eq!(rec.diagnostics.shots_per_setting, Some(8192));
        assert_eq!(rec.diagnostics.settings_used, 9);
        assert!(fidelity(&psi, &rec.rho).unwrap() > 0.99);
    }

    #[test]
    fn device_job_round_trip_and_orthogonal_fidelity() {
        let dev = DeviceModel::noiseless("line", 3, line_edges(3)).unwrap();
        let program = Program::default().prepare(0, 1).gate(GateLabel::Swap, (0, 1)).gate(GateLabel::Swap, (1, 2));
        let job = TomographyJob::new(vec![0, 1, 2], program, 8192).unwrap();
        let exact = job.simulate(&dev).unwrap();
        let rec = reconstruct(&expectations_from_distributions(3, &exact).unwrap());
        let ideal = PureState::from_bits(&[0, 0, 1]).unwrap();
        assert!((tomographic_fidelity(&ideal, &rec).unwrap() - 1.0).abs() < 1e-9);
        let wrong = PureState::from_bits(&[1, 0, 0]).unwrap();
        assert!(tomographic_fidelity(&wrong, &rec).unwrap() < 1e-6);

        let one = TomographyJob::new(vec![2], job.program().clone(), 8192).unwrap();
        let sampled = reconstruct(&expectations_from_counts(&[2], &one.sample(&dev, 4).unwrap(), None).unwrap());
        let ideal_one = PureState::from_bits(&[1]).unwrap();
        assert!((tomographic_fidelity(&ideal_one, &sampled).unwrap() - 1.0).abs() < 2e-3);
    }

    #[test]
    fn mitigated_tomography_removes_readout_bias() {
        let dev = make_line_like(2, 5);
        let program = Program::default().prepare(0, 1);
        let job = TomographyJob::new(vec![0, 1], program, 8192).unwrap();
        let truth = job.target_state(&dev).unwrap();
        let records = job.sample(&dev, 9).unwrap();
        let ideal = PureState::from_bits(&[1, 0]).unwrap();
        let truth_f = fidelity(&ideal, &truth).unwrap();
        let raw = tomographic_fidelity(&ideal, &reconstruct(&expectations_from_counts(&[0, 1], &records, None).unwrap())).unwrap();
        let mit = tomographic_fidelity(
            &ideal,
            &reconstruct(&expectations_from_counts(&[0, 1], &records, Some(dev.readout())).unwrap()),
        )
        .unwrap();
        assert!((mit - truth_f).abs() < (raw - truth_f).abs());
        assert!((mit - truth_f).abs() < 0.01);
    }

    #[test]
    fn targets_may_be_reordered_or_reduced() {
        let dev = DeviceModel::noiseless("line", 3, line_edges(3)).unwrap();
        let program = Program::default().prepare(0, 1).prepare(2, 1).gate(GateLabel::Swap, (0, 1));
        let job = TomographyJob::new(vec![2, 1], program, 100).unwrap();
        let rho = job.target_state(&dev).unwrap();
        // target order (2, 1): qubit 2 holds 1, qubit 1 holds 1
        assert!((rho.diagonal()[3] - 1.0).abs() < 1e-12);
        let job = TomographyJob::new(vec![0], Program::default().prepare(0, 1).gate(GateLabel::Swap, (0, 1)), 100).unwrap();
        assert!((job.target_state(&dev).unwrap().diagonal()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn records_and_reconstruction_serialize() {
        let dev = DeviceModel::noiseless("line", 2, line_edges(2)).unwrap();
        let job = TomographyJob::new(vec![0, 1], Program::default().prepare(1, 1), 50).unwrap();
        let records = job.sample(&dev, 1).unwrap();
        let text = crate::jsonl::to_jsonl(&records);
        assert!(text.starts_with("{\"setting\":\"XX\""));
        let back: Vec<SettingRecord> = crate::jsonl::parse_jsonl(&text).unwrap();
        assert_eq!(back, records);

        let rec = reconstruct(&expectations_from_counts(&[0, 1], &records, None).unwrap());
        let json = serde_json::to_string(&rec).unwrap();
        let again: ReconstructedState = serde_json::from_str(&json).unwrap();
        assert!(again.rho.max_abs_diff(&rec.rho) == 0.0);
        assert!(serde_json::from_str::<Setting>("\"XI\"").is_err());
    }
}
