//! C ABI over polynomials, puzzles, nests and moduli.
//!
//! Objects are opaque handles created by `fp_*_new`/`fp_*_build` and released
//! by the matching `fp_*_free`. Every fallible call returns an [`FpStatus`];
//! the message of the last failure on the calling thread is available through
//! [`fp_last_error`].

use fatou_puzzle::angles::RationalAngle;
use fatou_puzzle::moduli::modulus_round;
use fatou_puzzle::nest::{enhanced_nest, fibonacci_model, NestRecord};
use fatou_puzzle::puzzle::{build_spec, locate, piece_degree, PieceId, PuzzleSpec};
use fatou_puzzle::{Polynomial, C64};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Polynomial = 3,
    Puzzle = 4,
    Nest = 5,
    Modulus = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

pub struct FpPolynomial(Polynomial);

pub struct FpPuzzle(PuzzleSpec);

pub struct FpNest(NestRecord);

/// One stage of an enhanced nest.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FpNestStage {
    pub h: u64,
    pub h_prime: u64,
    pub p: u64,
    pub p_prime: u64,
    pub deg: u64,
    pub deg_prime: u64,
    /// First return time of the critical orbit to `K_n`; zero when not resolved.
    pub return_time: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: FpStatus, msg: impl ToString) -> FpStatus {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
    status
}

fn guard(f: impl FnOnce() -> FpStatus) -> FpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(FpStatus::Panic, "internal panic"),
    }
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to `cap`).
/// Returns the full message length, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fp_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a polynomial from `n` coefficients, lowest degree first, given as
/// interleaved `(re, im)` pairs.
///
/// # Safety
/// `re_im` must point to `2 * n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_polynomial_new(re_im: *const f64, n: usize, out: *mut *mut FpPolynomial) -> FpStatus {
    guard(|| {
        if re_im.is_null() || out.is_null() {
            return fail(FpStatus::NullPointer, "null argument");
        }
        let raw = std::slice::from_raw_parts(re_im, 2 * n);
        let coeffs = raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
        match Polynomial::new(coeffs) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(FpPolynomial(p)));
                FpStatus::Ok
            }
            Err(e) => fail(FpStatus::Polynomial, e),
        }
    })
}

/// # Safety
/// `p` must be null or a handle from [`fp_polynomial_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_polynomial_free(p: *mut FpPolynomial) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live handle; `out_re` and `out_im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_polynomial_eval(
    p: *const FpPolynomial,
    re: f64,
    im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> FpStatus {
    guard(|| {
        if p.is_null() || out_re.is_null() || out_im.is_null() {
            return fail(FpStatus::NullPointer, "null argument");
        }
        let w = (*p).0.eval(C64::new(re, im));
        *out_re = w.re;
        *out_im = w.im;
        FpStatus::Ok
    })
}

/// Builds the depth-0 puzzle for the superattracting fixed point `c0` and the
/// periodic internal angle `theta` (written `"p/q"`).
///
/// # Safety
/// `p` must be a live handle, `theta` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fp_puzzle_build(
    p: *const FpPolynomial,
    c0_re: f64,
    c0_im: f64,
    theta: *const c_char,
    out: *mut *mut FpPuzzle,
) -> FpStatus {
    guard(|| {
        if p.is_null() || theta.is_null() || out.is_null() {
            return fail(FpStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(theta).to_str() else {
            return fail(FpStatus::InvalidArgument, "theta is not UTF-8");
        };
        let angle: RationalAngle = match text.parse() {
            Ok(a) => a,
            Err(e) => return fail(FpStatus::InvalidArgument, e),
        };
        match build_spec(&(*p).0, C64::new(c0_re, c0_im), &angle) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(FpPuzzle(s)));
                FpStatus::Ok
            }
            Err(e) => fail(FpStatus::Puzzle, e),
        }
    })
}

/// # Safety
/// `s` must be null or a handle from [`fp_puzzle_build`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_puzzle_free(s: *mut FpPuzzle) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of depth-0 pieces.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_puzzle_label_count(s: *const FpPuzzle) -> usize {
    if s.is_null() {
        return 0;
    }
    (*s).0.label_count()
}

/// Writes the labels of `z, f(z), ..., f^depth(z)` to `word` (capacity `cap`).
///
/// # Safety
/// `s` must be a live handle; `word` must point to `cap` bytes; `len` writable.
#[no_mangle]
pub unsafe extern "C" fn fp_puzzle_locate(
    s: *const FpPuzzle,
    re: f64,
    im: f64,
    depth: usize,
    word: *mut u8,
    cap: usize,
    len: *mut usize,
) -> FpStatus {
    guard(|| {
        if s.is_null() || word.is_null() || len.is_null() {
            return fail(FpStatus::NullPointer, "null argument");
        }
        match locate(&(*s).0, C64::new(re, im), depth) {
            Ok(w) => {
                *len = w.word().len();
                if cap < w.word().len() {
                    return fail(FpStatus::BufferTooSmall, format!("need {} bytes", w.word().len()));
                }
                std::ptr::copy_nonoverlapping(w.word().as_ptr(), word, w.word().len());
                FpStatus::Ok
            }
            Err(e) => fail(FpStatus::Puzzle, e),
        }
    })
}

/// Degree of `f^depth` on the piece with the given word.
///
/// # Safety
/// `s` must be a live handle; `word` must point to `len` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fp_puzzle_piece_degree(s: *const FpPuzzle, word: *const u8, len: usize, out: *mut u64) -> FpStatus {
    guard(|| {
        if s.is_null() || word.is_null() || out.is_null() {
            return fail(FpStatus::NullPointer, "null argument");
        }
        let id = match PieceId::new(std::slice::from_raw_parts(word, len).to_vec()) {
            Ok(id) => id,
            Err(e) => return fail(FpStatus::InvalidArgument, e),
        };
        match piece_degree(&(*s).0, &id) {
            Ok(d) => {
                *out = d;
                FpStatus::Ok
            }
            Err(e) => fail(FpStatus::Puzzle, e),
        }
    })
}

/// Enhanced nest of the Fibonacci model at the given horizon, starting from
/// the depth-0 critical piece. `tau == 0` selects the default.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_nest_fibonacci(horizon: usize, tau: usize, n_max: usize, out: *mut *mut FpNest) -> FpStatus {
    guard(|| {
        if out.is_null() {
            return fail(FpStatus::NullPointer, "null argument");
        }
        if horizon < 2 {
            return fail(FpStatus::InvalidArgument, "horizon must be at least 2");
        }
        let table = fibonacci_model(horizon);
        let k0 = PieceId::from_vec(table.itinerary(0)[..1].to_vec());
        let tau = (tau > 0).then_some(tau);
        match enhanced_nest(&table, 0, &k0, tau, n_max, 4) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(FpNest(r)));
                FpStatus::Ok
            }
            Err(e) => fail(FpStatus::Nest, e),
        }
    })
}

/// # Safety
/// `n` must be null or a handle from [`fp_nest_fibonacci`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_nest_free(n: *mut FpNest) {
    if !n.is_null() {
        drop(Box::from_raw(n));
    }
}

/// # Safety
/// `n` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_nest_stage_count(n: *const FpNest) -> usize {
    if n.is_null() {
        return 0;
    }
    (*n).0.stages.len()
}

/// 1 when every stage inequality held, 0 otherwise.
///
/// # Safety
/// `n` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_nest_checks_passed(n: *const FpNest) -> i32 {
    if n.is_null() {
        return 0;
    }
    (*n).0.checks.all() as i32
}

/// # Safety
/// `n` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fp_nest_stage(n: *const FpNest, index: usize, out: *mut FpNestStage) -> FpStatus {
    guard(|| {
        if n.is_null() || out.is_null() {
            return fail(FpStatus::NullPointer, "null argument");
        }
        let stages = &(*n).0.stages;
        let Some(s) = stages.get(index) else {
            return fail(FpStatus::InvalidArgument, format!("stage {index} out of range"));
        };
        *out = FpNestStage {
            h: s.h as u64,
            h_prime: s.h_prime as u64,
            p: s.p as u64,
            p_prime: s.p_prime as u64,
            deg: s.deg,
            deg_prime: s.deg_prime,
            return_time: s.return_time.exact().unwrap_or(0) as u64,
        };
        FpStatus::Ok
    })
}

/// Serializes the nest record as JSON; release the string with [`fp_string_free`].
///
/// # Safety
/// `n` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fp_nest_to_json(n: *const FpNest, out: *mut *mut c_char) -> FpStatus {
    guard(|| {
        if n.is_null() || out.is_null() {
            return fail(FpStatus::NullPointer, "null argument");
        }
        match serde_json::to_string(&(*n).0).map(CString::new) {
            Ok(Ok(s)) => {
                *out = s.into_raw();
                FpStatus::Ok
            }
            Ok(Err(e)) => fail(FpStatus::Nest, e),
            Err(e) => fail(FpStatus::Nest, e),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Modulus `log(r) / 2π` of the round annulus `1 < |z| < r`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_modulus_round(r: f64, out: *mut f64) -> FpStatus {
    guard(|| {
        if out.is_null() {
            return fail(FpStatus::NullPointer, "null argument");
        }
        match modulus_round(r) {
            Ok(m) => {
                *out = m;
                FpStatus::Ok
            }
            Err(e) => fail(FpStatus::Modulus, e),
        }
    })
}
