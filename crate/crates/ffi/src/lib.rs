//! C ABI over `fcs-core`.
//!
//! Every function returns an [`FcsStatus`]; results go through out-pointers.
//! On failure, [`fcs_last_error_message`] describes the error on the calling
//! thread. Handles are opaque and must be released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fcs_core::fcs::{full_conformal_set_ridge, BoltzmannDesign, CandidateGrid};
use fcs_core::landscape::{generate_synthetic_landscape, load_landscape, FeatureMap, Landscape};
use fcs_core::quantile::WeightedDiscreteDist;
use fcs_core::regression::{Dataset, RidgeConfig};
use fcs_core::split::{
    staircase_profile, CalibrationSet, SplitCalibration, SplitModel, StaircaseSet,
};
use fcs_core::FcsError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DomainError = 3,
    DegenerateWeights = 4,
    NumericError = 5,
    Unsupported = 6,
    IoError = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &FcsError) -> FcsStatus {
    match err {
        FcsError::Domain(_) => FcsStatus::DomainError,
        FcsError::DegenerateWeights => FcsStatus::DegenerateWeights,
        FcsError::Numeric(_) => FcsStatus::NumericError,
        FcsError::Unsupported(_) => FcsStatus::Unsupported,
        FcsError::Io(_) | FcsError::Csv(_) => FcsStatus::IoError,
        FcsError::Trial { source, .. } => status_of(source),
        FcsError::Input(_) | FcsError::Format { .. } | FcsError::Config(_) => {
            FcsStatus::InvalidArgument
        }
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), FcsStatusError>) -> FcsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FcsStatus::Ok,
        Ok(Err(e)) => {
            set_error(e.message);
            e.status
        }
        Err(_) => {
            set_error("internal panic".into());
            FcsStatus::Panic
        }
    }
}

struct FcsStatusError {
    status: FcsStatus,
    message: String,
}

impl From<FcsError> for FcsStatusError {
    fn from(e: FcsError) -> Self {
        Self {
            status: status_of(&e),
            message: e.to_string(),
        }
    }
}

fn null(what: &str) -> FcsStatusError {
    FcsStatusError {
        status: FcsStatus::NullPointer,
        message: format!("`{what}` is null"),
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], FcsStatusError> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fcs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

fn quantile_with<F>(
    support: *const f64,
    weights: *const f64,
    len: usize,
    out: *mut f64,
    f: F,
) -> FcsStatus
where
    F: FnOnce(&WeightedDiscreteDist) -> fcs_core::Result<f64>,
{
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (s, w) = unsafe {
            (
                slice(support, len, "support")?,
                slice(weights, len, "weights")?,
            )
        };
        let value = f(&WeightedDiscreteDist::from_weights(s, w)?)?;
        unsafe { *out = value };
        Ok(())
    })
}

/// Weighted `beta`-quantile of `len` atoms with nonnegative weights.
///
/// # Safety
/// `support` and `weights` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcs_weighted_quantile(
    support: *const f64,
    weights: *const f64,
    len: usize,
    beta: f64,
    out: *mut f64,
) -> FcsStatus {
    quantile_with(support, weights, len, out, |d| d.quantile(beta))
}

/// Lower bound of the weighted `beta`-quantile; may be `-inf`.
///
/// # Safety
/// As for [`fcs_weighted_quantile`].
#[no_mangle]
pub unsafe extern "C" fn fcs_weighted_quantile_lower_bound(
    support: *const f64,
    weights: *const f64,
    len: usize,
    beta: f64,
    out: *mut f64,
) -> FcsStatus {
    quantile_with(support, weights, len, out, |d| d.quantile_lower_bound(beta))
}

/// Randomized quantile driven by the caller's uniform `u` in `[0, 1]`.
///
/// # Safety
/// As for [`fcs_weighted_quantile`].
#[no_mangle]
pub unsafe extern "C" fn fcs_randomized_quantile(
    support: *const f64,
    weights: *const f64,
    len: usize,
    beta: f64,
    u: f64,
    out: *mut f64,
) -> FcsStatus {
    quantile_with(support, weights, len, out, |d| {
        d.randomized_quantile_with(beta, u)
    })
}

/// Opaque landscape handle.
pub struct FcsLandscape(Landscape);

fn boxed<T>(value: T, out: *mut *mut T) {
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Synthetic landscape featurized with interactions up to `feature_order`.
///
/// # Safety
/// `coeff_sd` must point to `max_order` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcs_landscape_synthetic(
    length: usize,
    max_order: usize,
    coeff_sd: *const f64,
    noise_sd: f64,
    seed: u64,
    feature_order: usize,
    out: *mut *mut FcsLandscape,
) -> FcsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let sd = slice(coeff_sd, max_order, "coeff_sd")?;
        let synth = generate_synthetic_landscape(length, max_order, sd, noise_sd, seed)?;
        let landscape = synth
            .landscape
            .with_feature_map(FeatureMap::new(feature_order, false))?;
        boxed(FcsLandscape(landscape), out);
        Ok(())
    })
}

/// Loads a landscape CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcs_landscape_load(
    path: *const c_char,
    feature_order: usize,
    out: *mut *mut FcsLandscape,
) -> FcsStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| FcsStatusError {
            status: FcsStatus::InvalidArgument,
            message: "path is not UTF-8".into(),
        })?;
        let landscape = load_landscape(path, FeatureMap::new(feature_order, false))?;
        boxed(FcsLandscape(landscape), out);
        Ok(())
    })
}

/// Number of sequences, or 0 for a null handle.
///
/// # Safety
/// `handle` must be null or a live landscape handle.
#[no_mangle]
pub unsafe extern "C" fn fcs_landscape_size(handle: *const FcsLandscape) -> usize {
    handle.as_ref().map_or(0, |h| h.0.size())
}

/// # Safety
/// `handle` must be a live landscape handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcs_landscape_fitness(
    handle: *const FcsLandscape,
    index: usize,
    out: *mut f64,
) -> FcsStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let value = h.0.fitness().get(index).ok_or_else(|| FcsStatusError {
            status: FcsStatus::InvalidArgument,
            message: format!("index {index} is outside the landscape"),
        })?;
        *out = *value;
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fcs_landscape_free(handle: *mut FcsLandscape) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of points on the grid `lo:hi:step`, or 0 if the grid is invalid.
#[no_mangle]
pub extern "C" fn fcs_grid_len(lo: f64, hi: f64, step: f64) -> usize {
    CandidateGrid::new(lo, hi, step).map_or(0, |g| g.len())
}

/// Full conformal set for ridge regression under a Boltzmann design, with
/// training and test inputs given as landscape indices. Writes one flag per
/// grid point (see [`fcs_grid_len`]).
///
/// # Safety
/// `train_ids` and `train_labels` must point to `n` values; `flags` must
/// point to `flags_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fcs_full_conformal_ridge(
    landscape: *const FcsLandscape,
    train_ids: *const usize,
    train_labels: *const f64,
    n: usize,
    test_id: usize,
    grid_lo: f64,
    grid_hi: f64,
    grid_step: f64,
    alpha: f64,
    gamma: f64,
    lambda: f64,
    flags: *mut u8,
    flags_len: usize,
) -> FcsStatus {
    guard(|| {
        let l = &landscape.as_ref().ok_or_else(|| null("landscape"))?.0;
        let ids = slice(train_ids, n, "train_ids")?;
        let labels = slice(train_labels, n, "train_labels")?;
        let grid = CandidateGrid::new(grid_lo, grid_hi, grid_step)?;
        if flags.is_null() {
            return Err(null("flags"));
        }
        if flags_len != grid.len() {
            return Err(FcsStatusError {
                status: FcsStatus::InvalidArgument,
                message: format!(
                    "flags buffer holds {flags_len} entries but the grid has {}",
                    grid.len()
                ),
            });
        }
        let bad_id = |id: usize| FcsStatusError {
            status: FcsStatus::InvalidArgument,
            message: format!("sequence index {id} is outside the landscape"),
        };
        let mut data = Dataset::empty(l.feature_dim());
        for (&id, &y) in ids.iter().zip(labels) {
            if id >= l.size() {
                return Err(bad_id(id));
            }
            data.push(l.features(id), y)?;
        }
        if test_id >= l.size() {
            return Err(bad_id(test_id));
        }
        let set = full_conformal_set_ridge(
            &data,
            l.features(test_id),
            grid,
            alpha,
            RidgeConfig::new(gamma)?,
            BoltzmannDesign { lambda },
            l,
        )?;
        let out = std::slice::from_raw_parts_mut(flags, flags_len);
        for (o, &inc) in out.iter_mut().zip(&set.included) {
            *o = u8::from(inc);
        }
        Ok(())
    })
}

/// Opaque randomized staircase set.
pub struct FcsStaircase(StaircaseSet);

struct Zero;

impl SplitModel<f64> for Zero {
    fn predict(&self, _: &f64) -> f64 {
        0.0
    }
}

/// Samples a randomized staircase set from precomputed calibration scores
/// and log likelihood ratios, centred at `prediction` with scale `scale`.
///
/// # Safety
/// `scores` and `log_ratios` must point to `m` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcs_staircase_sample(
    scores: *const f64,
    log_ratios: *const f64,
    m: usize,
    test_log_ratio: f64,
    alpha: f64,
    prediction: f64,
    scale: f64,
    seed: u64,
    out: *mut *mut FcsStaircase,
) -> FcsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scores = slice(scores, m, "scores")?;
        let lrs = slice(log_ratios, m, "log_ratios")?;
        if let Some(s) = scores.iter().find(|s| !(**s >= 0.0)) {
            return Err(FcsStatusError {
                status: FcsStatus::InvalidArgument,
                message: format!("scores must be nonnegative, got {s}"),
            });
        }
        if !(scale > 0.0) || !scale.is_finite() || !prediction.is_finite() {
            return Err(FcsStatusError {
                status: FcsStatus::InvalidArgument,
                message: "prediction must be finite and scale positive".into(),
            });
        }
        // inputs carry the log ratios and labels the scores around a zero model
        let cal = CalibrationSet::new(lrs.to_vec(), scores.to_vec())?;
        let ratio = |x: &f64| *x;
        let prep = SplitCalibration::new(&cal, &Zero, &ratio)?;
        let mut profile = staircase_profile(&prep, &Zero, &test_log_ratio, alpha, &ratio)?;
        profile.prediction = prediction;
        profile.scale = scale;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        boxed(FcsStaircase(profile.sample(&mut rng)), out);
        Ok(())
    })
}

/// Number of disjoint intervals, or 0 for a null handle.
///
/// # Safety
/// `handle` must be null or a live staircase handle.
#[no_mangle]
pub unsafe extern "C" fn fcs_staircase_interval_count(handle: *const FcsStaircase) -> usize {
    handle.as_ref().map_or(0, |h| h.0.intervals().len())
}

/// Bounds of interval `index`; bounds may be infinite.
///
/// # Safety
/// `handle` must be a live staircase handle; `lo` and `hi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcs_staircase_interval(
    handle: *const FcsStaircase,
    index: usize,
    lo: *mut f64,
    hi: *mut f64,
) -> FcsStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        if lo.is_null() || hi.is_null() {
            return Err(null("lo/hi"));
        }
        let &(a, b) = h.0.intervals().get(index).ok_or_else(|| FcsStatusError {
            status: FcsStatus::InvalidArgument,
            message: format!("interval {index} does not exist"),
        })?;
        *lo = a;
        *hi = b;
        Ok(())
    })
}

/// Writes 1 to `out` when `y` lies in the set and 0 otherwise.
///
/// # Safety
/// `handle` must be a live staircase handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcs_staircase_contains(
    handle: *const FcsStaircase,
    y: f64,
    out: *mut u8,
) -> FcsStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = u8::from(h.0.contains(y));
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fcs_staircase_free(handle: *mut FcsStaircase) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        unsafe {
            CStr::from_ptr(fcs_last_error_message())
                .to_string_lossy()
                .into_owned()
        }
    }

    #[test]
    fn quantile_round_trip() {
        let s = [1.0, 2.0, 3.0];
        let w = [0.2, 0.3, 0.5];
        let mut out = 0.0;
        unsafe {
            assert_eq!(
                fcs_weighted_quantile(s.as_ptr(), w.as_ptr(), 3, 0.5, &mut out),
                FcsStatus::Ok
            );
            assert_eq!(out, 2.0);
            assert_eq!(
                fcs_weighted_quantile_lower_bound(s.as_ptr(), w.as_ptr(), 3, 0.5, &mut out),
                FcsStatus::Ok
            );
            assert_eq!(out, 1.0);
            assert_eq!(
                fcs_randomized_quantile(s.as_ptr(), w.as_ptr(), 3, 0.5, 1.0, &mut out),
                FcsStatus::Ok
            );
            assert_eq!(out, 2.0);
        }
    }

    #[test]
    fn errors_set_status_and_message() {
        let s = [1.0];
        let w = [1.0];
        let mut out = 0.0;
        unsafe {
            assert_eq!(
                fcs_weighted_quantile(s.as_ptr(), w.as_ptr(), 1, 1.5, &mut out),
                FcsStatus::DomainError
            );
            assert!(last_error().contains("beta"), "{}", last_error());
            assert_eq!(
                fcs_weighted_quantile(ptr::null(), w.as_ptr(), 1, 0.5, &mut out),
                FcsStatus::NullPointer
            );
            let zero = [0.0];
            assert_eq!(
                fcs_weighted_quantile(s.as_ptr(), zero.as_ptr(), 1, 0.5, &mut out),
                FcsStatus::DegenerateWeights
            );
        }
    }

    #[test]
    fn landscape_handle_lifecycle() {
        let sd = [0.1, 0.04];
        let mut h = ptr::null_mut();
        unsafe {
            assert_eq!(
                fcs_landscape_synthetic(6, 2, sd.as_ptr(), 0.05, 1, 2, &mut h),
                FcsStatus::Ok
            );
            assert_eq!(fcs_landscape_size(h), 64);
            let mut f = f64::NAN;
            assert_eq!(fcs_landscape_fitness(h, 3, &mut f), FcsStatus::Ok);
            assert!(f.is_finite());
            assert_eq!(
                fcs_landscape_fitness(h, 64, &mut f),
                FcsStatus::InvalidArgument
            );
            fcs_landscape_free(h);
            assert_eq!(
                fcs_landscape_synthetic(40, 2, sd.as_ptr(), 0.05, 1, 2, &mut h),
                FcsStatus::Unsupported
            );
        }
    }

    #[test]
    fn ridge_flags_match_core() {
        let sd = [0.1, 0.04];
        let mut h = ptr::null_mut();
        unsafe {
            assert_eq!(
                fcs_landscape_synthetic(6, 2, sd.as_ptr(), 0.05, 1, 1, &mut h),
                FcsStatus::Ok
            );
            let ids = [1usize, 5, 9, 17, 33, 40, 41, 63];
            let labels: Vec<f64> = ids.iter().map(|&i| (*h).0.fitness()[i]).collect();
            let k = fcs_grid_len(-1.0, 1.0, 0.05);
            let mut flags = vec![0u8; k];
            let st = fcs_full_conformal_ridge(
                h,
                ids.as_ptr(),
                labels.as_ptr(),
                ids.len(),
                12,
                -1.0,
                1.0,
                0.05,
                0.2,
                1.0,
                2.0,
                flags.as_mut_ptr(),
                k,
            );
            assert_eq!(st, FcsStatus::Ok, "{}", last_error());
            let l = &(*h).0;
            let mut data = Dataset::empty(l.feature_dim());
            for (&i, &y) in ids.iter().zip(&labels) {
                data.push(l.features(i), y).unwrap();
            }
            let set = full_conformal_set_ridge(
                &data,
                l.features(12),
                CandidateGrid::new(-1.0, 1.0, 0.05).unwrap(),
                0.2,
                RidgeConfig::new(1.0).unwrap(),
                BoltzmannDesign { lambda: 2.0 },
                l,
            )
            .unwrap();
            assert_eq!(
                flags.iter().map(|&f| f == 1).collect::<Vec<_>>(),
                set.included
            );
            let mut short = vec![0u8; 3];
            let st = fcs_full_conformal_ridge(
                h,
                ids.as_ptr(),
                labels.as_ptr(),
                ids.len(),
                12,
                -1.0,
                1.0,
                0.05,
                0.2,
                1.0,
                2.0,
                short.as_mut_ptr(),
                3,
            );
            assert_eq!(st, FcsStatus::InvalidArgument);
            fcs_landscape_free(h);
        }
    }

    #[test]
    fn staircase_handle_lifecycle() {
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        let lrs = [0.0; 10];
        let mut h = ptr::null_mut();
        unsafe {
            let st = fcs_staircase_sample(
                scores.as_ptr(),
                lrs.as_ptr(),
                10,
                0.0,
                0.2,
                5.0,
                0.5,
                7,
                &mut h,
            );
            assert_eq!(st, FcsStatus::Ok);
            let count = fcs_staircase_interval_count(h);
            assert!(count >= 1);
            let (mut lo, mut hi) = (0.0, 0.0);
            assert_eq!(
                fcs_staircase_interval(h, 0, &mut lo, &mut hi),
                FcsStatus::Ok
            );
            assert!(lo <= 5.0 && hi >= 5.0 && lo >= 5.0 - 0.5 * 9.0);
            let mut inside = 0u8;
            assert_eq!(fcs_staircase_contains(h, 5.0, &mut inside), FcsStatus::Ok);
            assert_eq!(inside, 1);
            fcs_staircase_free(h);
            fcs_staircase_free(ptr::null_mut());
        }
    }
}
