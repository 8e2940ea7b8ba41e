#ifndef FATOU_PUZZLE_H
#define FATOU_PUZZLE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FpStatus {
  FP_STATUS_OK = 0,
  FP_STATUS_NULL_POINTER = 1,
  FP_STATUS_INVALID_ARGUMENT = 2,
  FP_STATUS_POLYNOMIAL = 3,
  FP_STATUS_PUZZLE = 4,
  FP_STATUS_NEST = 5,
  FP_STATUS_MODULUS = 6,
  FP_STATUS_BUFFER_TOO_SMALL = 7,
  FP_STATUS_PANIC = 8,
} FpStatus;

typedef struct FpNest FpNest;

typedef struct FpPolynomial FpPolynomial;

typedef struct FpPuzzle FpPuzzle;

/**
 * One stage of an enhanced nest.
 */
typedef struct FpNestStage {
  uint64_t h;
  uint64_t h_prime;
  uint64_t p;
  uint64_t p_prime;
  uint64_t deg;
  uint64_t deg_prime;
  /**
   * First return time of the critical orbit to `K_n`; zero when not resolved.
   */
  uint64_t return_time;
} FpNestStage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to `cap`).
 * Returns the full message length, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t fp_last_error(char *buf, size_t cap);

/**
 * Builds a polynomial from `n` coefficients, lowest degree first, given as
 * interleaved `(re, im)` pairs.
 *
 * # Safety
 * `re_im` must point to `2 * n` doubles and `out` must be writable.
 */
enum FpStatus fp_polynomial_new(const double *re_im, size_t n, struct FpPolynomial **out);

/**
 * # Safety
 * `p` must be null or a handle from [`fp_polynomial_new`] not yet freed.
 */
void fp_polynomial_free(struct FpPolynomial *p);

/**
 * # Safety
 * `p` must be a live handle; `out_re` and `out_im` must be writable.
 */
enum FpStatus fp_polynomial_eval(const struct FpPolynomial *p,
                                 double re,
                                 double im,
                                 double *out_re,
                                 double *out_im);

/**
 * Builds the depth-0 puzzle for the superattracting fixed point `c0` and the
 * periodic internal angle `theta` (written `"p/q"`).
 *
 * # Safety
 * `p` must be a live handle, `theta` a NUL-terminated string and `out` writable.
 */
enum FpStatus fp_puzzle_build(const struct FpPolynomial *p,
                              double c0_re,
                              double c0_im,
                              const char *theta,
                              struct FpPuzzle **out);

/**
 * # Safety
 * `s` must be null or a handle from [`fp_puzzle_build`] not yet freed.
 */
void fp_puzzle_free(struct FpPuzzle *s);

/**
 * Number of depth-0 pieces.
 *
 * # Safety
 * `s` must be a live handle.
 */
size_t fp_puzzle_label_count(const struct FpPuzzle *s);

/**
 * Writes the labels of `z, f(z), ..., f^depth(z)` to `word` (capacity `cap`).
 *
 * # Safety
 * `s` must be a live handle; `word` must point to `cap` bytes; `len` writable.
 */
enum FpStatus fp_puzzle_locate(const struct FpPuzzle *s,
                               double re,
                               double im,
                               size_t depth,
                               uint8_t *word,
                               size_t cap,
                               size_t *len);

/**
 * Degree of `f^depth` on the piece with the given word.
 *
 * # Safety
 * `s` must be a live handle; `word` must point to `len` bytes; `out` writable.
 */
enum FpStatus fp_puzzle_piece_degree(const struct FpPuzzle *s,
                                     const uint8_t *word,
                                     size_t len,
                                     uint64_t *out);

/**
 * Enhanced nest of the Fibonacci model at the given horizon, starting from
 * the depth-0 critical piece. `tau == 0` selects the default.
 *
 * # Safety
 * `out` must be writable.
 */
enum FpStatus fp_nest_fibonacci(size_t horizon, size_t tau, size_t n_max, struct FpNest **out);

/**
 * # Safety
 * `n` must be null or a handle from [`fp_nest_fibonacci`] not yet freed.
 */
void fp_nest_free(struct FpNest *n);

/**
 * # Safety
 * `n` must be a live handle.
 */
size_t fp_nest_stage_count(const struct FpNest *n);

/**
 * 1 when every stage inequality held, 0 otherwise.
 *
 * # Safety
 * `n` must be a live handle.
 */
int32_t fp_nest_checks_passed(const struct FpNest *n);

/**
 * # Safety
 * `n` must be a live handle and `out` writable.
 */
enum FpStatus fp_nest_stage(const struct FpNest *n, size_t index, struct FpNestStage *out);

/**
 * Serializes the nest record as JSON; release the string with [`fp_string_free`].
 *
 * # Safety
 * `n` must be a live handle and `out` writable.
 */
enum FpStatus fp_nest_to_json(const struct FpNest *n, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void fp_string_free(char *s);

/**
 * Modulus `log(r) / 2π` of the round annulus `1 < |z| < r`.
 *
 * # Safety
 * `out` must be writable.
 */
enum FpStatus fp_modulus_round(double r, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FATOU_PUZZLE_H */
