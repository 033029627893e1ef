#ifndef CASIMIR_H
#define CASIMIR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CasimirStatus {
  CASIMIR_STATUS_OK = 0,
  CASIMIR_STATUS_NULL_POINTER = 1,
  CASIMIR_STATUS_INVALID_ARGUMENT = 2,
  CASIMIR_STATUS_COMPUTATION_FAILED = 3,
  CASIMIR_STATUS_IO = 4,
  CASIMIR_STATUS_PANIC = 5,
} CasimirStatus;

/*
 Values accepted by the `kind` argument of [`casimir_model_new`].
 */
typedef enum CasimirKind {
  CASIMIR_KIND_IMPEDANCE = 0,
  CASIMIR_KIND_EXACT_IMPEDANCE = 1,
  CASIMIR_KIND_LIFSHITZ_DRUDE = 2,
  CASIMIR_KIND_LIFSHITZ_SCHWINGER = 3,
  CASIMIR_KIND_LIFSHITZ_PLASMA = 4,
  CASIMIR_KIND_IDEAL_METAL = 5,
} CasimirKind;

/*
 Reflection model with its permittivity.
 */
typedef struct CasimirModel CasimirModel;

/*
 Layered half-space for Yukawa pressures.
 */
typedef struct CasimirStack CasimirStack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version and constants tag; a static string.
 */
const char *casimir_version(void);

/*
 Message for the last failed call on this thread; empty after a success.
 Valid until the next call into the library on the same thread.
 */
const char *casimir_last_error(void);

/*
 Model of kind `kind` (a [`CasimirKind`] value) with Drude permittivity.
 */
enum CasimirStatus casimir_model_new(uint32_t kind,
                                     double omega_p,
                                     double gamma,
                                     struct CasimirModel **model_out);

/*
 Model whose permittivity is the dispersion transform of the optical table
 at `path` (`x n k` rows; `#unit:` header required).
 */
enum CasimirStatus casimir_model_new_tabulated(uint32_t kind,
                                               const char *path,
                                               double omega_p,
                                               double gamma,
                                               struct CasimirModel **model_out);

void casimir_model_free(struct CasimirModel *model);

/*
 `epsilon(i xi)` of the model's permittivity.
 */
enum CasimirStatus casimir_permittivity(const struct CasimirModel *model,
                                        double xi,
                                        double *eps_out);

/*
 Squared reflection coefficients at Matsubara index `l`.
 */
enum CasimirStatus casimir_reflection(const struct CasimirModel *model,
                                      double xi,
                                      double k_perp,
                                      uint32_t l,
                                      double *tm_out,
                                      double *te_out);

/*
 Pressure between two plates, Pa (negative for attraction).
 */
enum CasimirStatus casimir_pressure(const struct CasimirModel *model,
                                    double z,
                                    double temperature,
                                    double *pressure_out);

/*
 Free energy per unit area, J/m^2.
 */
enum CasimirStatus casimir_free_energy(const struct CasimirModel *model,
                                       double z,
                                       double temperature,
                                       double *energy_out);

/*
 Stack of `n_layers` layers from the surface inward. `thicknesses[i]` is
 in metres; the last entry is ignored since the last layer is
 semi-infinite.
 */
enum CasimirStatus casimir_stack_new(const double *densities,
                                     const double *thicknesses,
                                     size_t n_layers,
                                     struct CasimirStack **stack_out);

/*
 Built-in stacks: 0 for the sphere side, 1 for the plate side.
 */
enum CasimirStatus casimir_stack_builtin(uint32_t which, struct CasimirStack **stack_out);

void casimir_stack_free(struct CasimirStack *stack);

/*
 Yukawa pressure between two stacks at separation `z`, Pa.
 */
enum CasimirStatus casimir_yukawa_pressure(const struct CasimirStack *a,
                                           const struct CasimirStack *b,
                                           double z,
                                           double alpha_g,
                                           double lambda,
                                           double *pressure_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CASIMIR_H */
