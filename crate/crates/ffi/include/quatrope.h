#ifndef QUATROPE_H
#define QUATROPE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QrStatus {
  QR_STATUS_OK = 0,
  QR_STATUS_NULL_POINTER = 1,
  QR_STATUS_INVALID_ARGUMENT = 2,
  QR_STATUS_NUMERICAL_FAULT = 3,
  QR_STATUS_BUFFER_TOO_SMALL = 4,
  QR_STATUS_INTERNAL = 5,
} QrStatus;

// Attention configuration handle.
typedef struct QrAttention QrAttention;

// Generated scene handle.
typedef struct QrScene QrScene;

typedef struct QrBudget {
  uint64_t full_pair_count;
  uint64_t directed_pair_count;
  uint64_t knn_edge_count;
} QrBudget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len - 1` bytes). Returns the full message length, or 0 when
// there is no error.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t qr_last_error_message(char *buf, uintptr_t len);

// Rotor `Qz * Qy * Qx` for a position; writes `(w, x, y, z)` to `out`.
//
// # Safety
// `pos` and `freq` point to 3 doubles, `out` to 4 writable doubles.
enum QrStatus qr_compose_rotor(const double *pos, const double *freq, double *out);

// Rotates every 3-component segment of `v` by the rotor of `pos`, with one
// frequency triple shared by all segments.
//
// # Safety
// `v` and `out` point to `len` doubles; `pos` and `freq` to 3 doubles.
enum QrStatus qr_apply_quatrope(const double *v,
                                uintptr_t len,
                                const double *pos,
                                const double *freq,
                                double *out);

// Score `<R(m) q, R(n) k>` of two vectors at positions `m` and `n`.
//
// # Safety
// `q` and `k` point to `len` doubles; `m`, `n`, `freq` to 3 doubles; `out`
// to one writable double.
enum QrStatus qr_pair_score(const double *q,
                            const double *k,
                            uintptr_t len,
                            const double *m,
                            const double *n,
                            const double *freq,
                            double *out);

// Creates an attention configuration with a uniform frequency, base vector
// `(1, 0, 0)` and zero padding for non-object tokens.
//
// # Safety
// `out` must point to a writable handle pointer.
enum QrStatus qr_attention_new(uintptr_t base_dim,
                               uintptr_t ext_dim,
                               double frequency,
                               struct QrAttention **out);

// Scaled `t x t` logits, row-major, no mask. Token `i` uses row `i` of
// `vectors` (`t * base_dim` doubles) as query and key, sequence index `i`,
// and when `is_object[i] != 0` the position in row `i` of `positions`
// (`t * 3` doubles).
//
// # Safety
// All pointers must be valid for the sizes above; `out` holds `t * t`
// doubles.
enum QrStatus qr_attention_logits(const struct QrAttention *handle,
                                  const double *vectors,
                                  const double *positions,
                                  const uint8_t *is_object,
                                  uintptr_t t,
                                  double *out);

// # Safety
// `handle` must be null or come from [`qr_attention_new`], freed once.
void qr_attention_free(struct QrAttention *handle);

// Generates a scene of `n_objects` objects in the default room.
//
// # Safety
// `out` must point to a writable handle pointer.
enum QrStatus qr_scene_generate(uint64_t seed,
                                uintptr_t n_objects,
                                uint32_t n_categories,
                                struct QrScene **out);

// Number of objects in the scene, 0 for a null handle.
//
// # Safety
// `handle` must be null or a live scene handle.
uintptr_t qr_scene_len(const struct QrScene *handle);

// Writes object centers as `x, y, z` triples in object order.
//
// # Safety
// `out` must point to `cap` writable doubles.
enum QrStatus qr_scene_positions(const struct QrScene *handle, double *out, uintptr_t cap);

// Serializes the scene as JSON. Release the string with [`qr_string_free`].
//
// # Safety
// `out` must point to a writable string pointer.
enum QrStatus qr_scene_to_json(const struct QrScene *handle, char **out);

// # Safety
// `handle` must be null or come from [`qr_scene_generate`], freed once.
void qr_scene_free(struct QrScene *handle);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void qr_string_free(char *s);

// Relation counts for `n` objects with `k` nearest neighbours each.
//
// # Safety
// `out` must point to a writable [`QrBudget`].
enum QrStatus qr_relation_budget(uint64_t n, uint64_t k, struct QrBudget *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUATROPE_H */
