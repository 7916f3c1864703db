//! C ABI over `nclabel`.
//!
//! Every fallible function returns an [`NclStatus`]; on failure the message
//! is available from [`ncl_last_error_message`] on the same thread. Matrices
//! are passed as row-major `double` arrays, labels as 0-based `size_t`.
//! Handles are created by `ncl_*_new`/`ncl_train_*` and released by the
//! matching `ncl_*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nclabel::baselines;
use nclabel::data::LabelColumn;
use nclabel::{ncbs, ncfw, ConfusionMatrix, Dataset, Error, Matrix, MeasureName, MeasureSpec, NoiseModel, RandomizedClassifier, TrainConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NclStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    SingularMatrix = 4,
    NonPositiveDenominator = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

/// Measure identifiers accepted where a function takes `int32_t measure`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NclMeasure {
    HMean = 0,
    QMean = 1,
    GMean = 2,
    MicroF1 = 3,
}

/// Class-conditional noise channel, `T[i][j] = P(noisy i | clean j)`.
pub struct NclNoise(NoiseModel);

/// Features with labels.
pub struct NclDataset(Dataset);

/// Trained (possibly randomized) classifier.
pub struct NclClassifier(RandomizedClassifier);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn status_of(e: &Error) -> NclStatus {
    match e {
        Error::SingularMatrix { .. } => NclStatus::SingularMatrix,
        Error::NonPositiveDenominator { .. } => NclStatus::NonPositiveDenominator,
        Error::ShapeMismatch(_) => NclStatus::ShapeMismatch,
        Error::Io { .. } | Error::MissingLabelColumn { .. } => NclStatus::Io,
        Error::Parse { .. } => NclStatus::Parse,
        _ => NclStatus::InvalidArgument,
    }
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NclStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return NclStatus::Ok,
        Ok(Err(Failure::Null(name))) => (NclStatus::NullPointer, format!("`{name}` is null")),
        Ok(Err(Failure::Arg(msg))) => (NclStatus::InvalidArgument, msg),
        Ok(Err(Failure::Lib(e))) => (status_of(&e), e.to_string()),
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (NclStatus::Panic, format!("panic: {msg}"))
        }
    };
    set_last_error(msg);
    status
}

unsafe fn as_ref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(out: *mut f64, values: &[f64], name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn measure_name(measure: i32) -> Result<MeasureName, Failure> {
    Ok(match measure {
        0 => MeasureName::HMean,
        1 => MeasureName::QMean,
        2 => MeasureName::GMean,
        3 => MeasureName::MicroF1,
        _ => return Err(Failure::Arg(format!("unknown measure id {measure}"))),
    })
}

fn square(n: usize, values: &[f64]) -> Result<Matrix, Failure> {
    Ok(Matrix::new(n, n, values.to_vec())?)
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns its full length in bytes, excluding the NUL.
/// Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ncl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ncl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Symmetric channel: `1 - sigma` on the diagonal, `sigma/(n-1)` elsewhere.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncl_noise_uniform(n: usize, sigma: f64, out: *mut *mut NclNoise) -> NclStatus {
    guard(|| store(out, NclNoise(NoiseModel::uniform(n, sigma)?)))
}

/// Channel with `1 - sigma` on the diagonal and random off-diagonal columns.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ncl_noise_random_column(n: usize, sigma: f64, seed: u64, out: *mut *mut NclNoise) -> NclStatus {
    guard(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        store(out, NclNoise(NoiseModel::random_column(n, sigma, &mut rng)?))
    })
}

/// Channel from an explicit column-stochastic `n`×`n` matrix.
///
/// # Safety
/// `t` must point to `n*n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ncl_noise_from_matrix(n: usize, t: *const f64, out: *mut *mut NclNoise) -> NclStatus {
    guard(|| {
        let t = square(n, slice(t, n * n, "t")?)?;
        store(out, NclNoise(NoiseModel::build(t)?))
    })
}

/// # Safety
/// `noise` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ncl_noise_free(noise: *mut NclNoise) {
    free(noise)
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `noise` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ncl_noise_n(noise: *const NclNoise) -> usize {
    noise.as_ref().map_or(0, |t| t.0.n())
}

/// `‖T⁻¹‖₁`, the maximum absolute column sum of the inverse.
///
/// # Safety
/// `noise` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ncl_noise_one_norm_of_inv(noise: *const NclNoise, out: *mut f64) -> NclStatus {
    guard(|| {
        let v = as_ref(noise, "noise")?.0.one_norm_of_inv();
        write_out(out, &[v], "out")
    })
}

/// Writes `T⁻¹` (`n*n` doubles).
///
/// # Safety
/// `noise` must be a live handle and `out` point to `n*n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ncl_noise_inverse(noise: *const NclNoise, out: *mut f64) -> NclStatus {
    guard(|| write_out(out, as_ref(noise, "noise")?.0.t_inv().as_slice(), "out"))
}

/// Clean class probabilities `T⁻¹p` from noisy ones (`n` doubles each).
///
/// # Safety
/// `p` and `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ncl_noise_correct_probs(noise: *const NclNoise, p: *const f64, out: *mut f64) -> NclStatus {
    guard(|| {
        let t = &as_ref(noise, "noise")?.0;
        let corrected = t.correct_probs(slice(p, t.n(), "p")?)?;
        write_out(out, &corrected, "out")
    })
}

/// Loss matrix `(Tᵀ)⁻¹L` whose expected value on noisy labels equals that of
/// `L` on clean ones.
///
/// # Safety
/// `loss` and `out` must point to `n*n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ncl_noise_correct_loss(noise: *const NclNoise, loss: *const f64, out: *mut f64) -> NclStatus {
    guard(|| {
        let t = &as_ref(noise, "noise")?.0;
        let n = t.n();
        let corrected = t.correct_loss(&square(n, slice(loss, n * n, "loss")?)?)?;
        write_out(out, corrected.as_slice(), "out")
    })
}

/// Clean confusion `T⁻¹C` from a noisy one.
///
/// # Safety
/// `confusion` and `out` must point to `n*n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ncl_noise_correct_confusion(noise: *const NclNoise, confusion: *const f64, out: *mut f64) -> NclStatus {
    guard(|| {
        let t = &as_ref(noise, "noise")?.0;
        let n = t.n();
        let c = ConfusionMatrix::new(square(n, slice(confusion, n * n, "confusion")?)?)?;
        write_out(out, t.correct_confusion(&c)?.matrix().as_slice(), "out")
    })
}

/// Loss of an `n`×`n` confusion matrix (rows true class, columns predicted)
/// under one of the [`NclMeasure`] values.
///
/// # Safety
/// `confusion` must point to `n*n` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn ncl_measure_evaluate(measure: i32, n: usize, confusion: *const f64, out: *mut f64) -> NclStatus {
    guard(|| {
        let spec = MeasureSpec::from_name(measure_name(measure)?, n)?;
        let c = ConfusionMatrix::new(square(n, slice(confusion, n * n, "confusion")?)?)?;
        write_out(out, &[spec.evaluate(&c)?], "out")
    })
}

/// Loss of the clean confusion estimated from a noisy one.
///
/// # Safety
/// `noisy_confusion` must point to `n*n` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn ncl_measure_evaluate_corrected(
    measure: i32,
    noise: *const NclNoise,
    noisy_confusion: *const f64,
    out: *mut f64,
) -> NclStatus {
    guard(|| {
        let t = &as_ref(noise, "noise")?.0;
        let n = t.n();
        let spec = MeasureSpec::from_name(measure_name(measure)?, n)?;
        let c = ConfusionMatrix::new(square(n, slice(noisy_confusion, n * n, "noisy_confusion")?)?)?;
        write_out(out, &[spec.evaluate_corrected(t, &c)?], "out")
    })
}

/// Dataset from `rows`×`dim` features and 0-based labels below `n_classes`.
///
/// # Safety
/// `features` must point to `rows*dim` doubles, `labels` to `rows` values.
#[no_mangle]
pub unsafe extern "C" fn ncl_dataset_new(
    rows: usize,
    dim: usize,
    features: *const f64,
    labels: *const usize,
    n_classes: usize,
    out: *mut *mut NclDataset,
) -> NclStatus {
    guard(|| {
        let x = Matrix::new(rows, dim, slice(features, rows * dim, "features")?.to_vec())?;
        if labels.is_null() {
            return Err(Failure::Null("labels"));
        }
        let y = std::slice::from_raw_parts(labels, rows).to_vec();
        store(out, NclDataset(Dataset::new(x, y, n_classes)?))
    })
}

/// Loads a CSV with a header row and 1-based labels in `label_column`
/// (`"label"` when null).
///
/// # Safety
/// `path` and `label_column` must be null or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ncl_dataset_load_csv(path: *const c_char, label_column: *const c_char, out: *mut *mut NclDataset) -> NclStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|e| Failure::Arg(format!("path is not UTF-8: {e}")))?;
        let column = if label_column.is_null() {
            LabelColumn::default()
        } else {
            let name = CStr::from_ptr(label_column).to_str().map_err(|e| Failure::Arg(format!("label column is not UTF-8: {e}")))?;
            LabelColumn::Name(name.to_string())
        };
        store(out, NclDataset(Dataset::load_csv(path, &column)?))
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ncl_dataset_free(dataset: *mut NclDataset) {
    free(dataset)
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ncl_dataset_len(dataset: *const NclDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// Feature dimension, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ncl_dataset_dim(dataset: *const NclDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.dim())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Noise-corrected Frank-Wolfe for H-mean, Q-mean or G-mean on a sample
/// with noisy labels. `steps == 0` selects the default.
///
/// # Safety
/// `dataset` and `noise` must be live handles and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ncl_train_ncfw(
    measure: i32,
    dataset: *const NclDataset,
    noise: *const NclNoise,
    steps: usize,
    seed: u64,
    out: *mut *mut NclClassifier,
) -> NclStatus {
    guard(|| {
        let t = &as_ref(noise, "noise")?.0;
        let sample = &as_ref(dataset, "dataset")?.0;
        let spec = MeasureSpec::from_name(measure_name(measure)?, t.n())?;
        let steps = if steps == 0 { ncfw::DEFAULT_STEPS } else { steps };
        let (h, _) = ncfw::run_ncfw(&spec, sample, t, steps, &TrainConfig::default(), &mut rng(seed))?;
        store(out, NclClassifier(h))
    })
}

/// Noise-corrected bisection for Micro F1 on a sample with noisy labels.
/// `steps == 0` selects the default.
///
/// # Safety
/// `dataset` and `noise` must be live handles and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ncl_train_ncbs(
    dataset: *const NclDataset,
    noise: *const NclNoise,
    steps: usize,
    seed: u64,
    out: *mut *mut NclClassifier,
) -> NclStatus {
    guard(|| {
        let t = &as_ref(noise, "noise")?.0;
        let sample = &as_ref(dataset, "dataset")?.0;
        let steps = if steps == 0 { ncbs::DEFAULT_STEPS } else { steps };
        let (h, _) = ncbs::micro_f1_run(sample, t, steps, &TrainConfig::default(), &mut rng(seed))?;
        store(out, NclClassifier(RandomizedClassifier::deterministic(h)))
    })
}

/// Plug-in classifier `argmax T⁻¹η̂(x)` on a sample with noisy labels.
///
/// # Safety
/// `dataset` and `noise` must be live handles and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ncl_train_plugin(dataset: *const NclDataset, noise: *const NclNoise, seed: u64, out: *mut *mut NclClassifier) -> NclStatus {
    guard(|| {
        let t = &as_ref(noise, "noise")?.0;
        let sample = &as_ref(dataset, "dataset")?.0;
        let h = baselines::train_plugin(sample, t, &TrainConfig::default(), &mut rng(seed))?;
        store(out, NclClassifier(RandomizedClassifier::deterministic(h)))
    })
}

/// # Safety
/// `classifier` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ncl_classifier_free(classifier: *mut NclClassifier) {
    free(classifier)
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `classifier` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ncl_classifier_n_classes(classifier: *const NclClassifier) -> usize {
    classifier.as_ref().map_or(0, |h| h.0.n_classes())
}

/// Distribution over predicted labels at `x` (`dim` doubles); writes
/// `n_classes` doubles.
///
/// # Safety
/// `x` must point to `dim` doubles and `out` to `n_classes` doubles.
#[no_mangle]
pub unsafe extern "C" fn ncl_classifier_predict_distribution(
    classifier: *const NclClassifier,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> NclStatus {
    guard(|| {
        let h = &as_ref(classifier, "classifier")?.0;
        let expected = h.components()[0].1.cpe().dim();
        if dim != expected {
            return Err(Failure::Arg(format!("x has {dim} features, classifier expects {expected}")));
        }
        write_out(out, &h.predict_distribution(slice(x, dim, "x")?)?, "out")
    })
}

/// Expected confusion of the classifier on a labelled sample
/// (`n_classes*n_classes` doubles).
///
/// # Safety
/// `dataset` must be a live handle and `out` point to `n*n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ncl_classifier_confusion(classifier: *const NclClassifier, dataset: *const NclDataset, out: *mut f64) -> NclStatus {
    guard(|| {
        let h = &as_ref(classifier, "classifier")?.0;
        let sample = &as_ref(dataset, "dataset")?.0;
        write_out(out, h.expected_confusion(sample)?.matrix().as_slice(), "out")
    })
}
