/* C interface for the polyhazard sampler. Generated by cbindgen. */

#ifndef POLYHAZARD_H
#define POLYHAZARD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum PhzStatus {
  PhzStatus_Ok = 0,
  /**
   * A pointer argument was null or an argument was out of range.
   */
  PhzStatus_InvalidArgument = 1,
  /**
   * Input data or configuration was malformed.
   */
  PhzStatus_InputError = 2,
  /**
   * A numerical failure inside the sampler.
   */
  PhzStatus_NumericalError = 3,
  /**
   * A panic crossed the boundary; state may be inconsistent.
   */
  PhzStatus_Panic = 4,
} PhzStatus;

/**
 * Censored survival dataset with standardized covariates.
 */
typedef struct PhzDataset PhzDataset;

/**
 * Completed sampler run: posterior snapshots, submodel probabilities, and
 * diagnostics for every chain.
 */
typedef struct PhzRun PhzRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *phz_last_error(void);

/**
 * Release a string returned through an out-parameter.
 *
 * # Safety
 * `s` must be a pointer previously returned by this library and not yet
 * freed; null is ignored.
 */
void phz_string_free(char *s);

/**
 * Load a dataset from a CSV file (header `time,event,x1..xp`).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum PhzStatus phz_dataset_read_csv(const char *path, struct PhzDataset **out);

/**
 * Simulate a single-Weibull dataset with exponential censoring
 * (`censor_rate = 0` disables censoring).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PhzStatus phz_dataset_simulate_weibull(double nu,
                                            double mu,
                                            double censor_rate,
                                            uintptr_t n,
                                            uint64_t seed,
                                            struct PhzDataset **out);

/**
 * Number of observations.
 *
 * # Safety
 * `dataset` must be a live handle from this library.
 */
uintptr_t phz_dataset_rows(const struct PhzDataset *dataset);

/**
 * Number of covariate columns.
 *
 * # Safety
 * `dataset` must be a live handle from this library.
 */
uintptr_t phz_dataset_covariates(const struct PhzDataset *dataset);

/**
 * Release a dataset handle.
 *
 * # Safety
 * `dataset` must come from this library and not be freed twice.
 */
void phz_dataset_free(struct PhzDataset *dataset);

/**
 * Fit the model. `config_json` holds the same JSON accepted by the CLI
 * (`{"prior": {...}, "sampler": {...}}`); pass null for the defaults.
 *
 * # Safety
 * `dataset` must be a live handle; `out` a valid pointer; `config_json`
 * null or NUL-terminated UTF-8.
 */
enum PhzStatus phz_fit(const struct PhzDataset *dataset,
                       const char *config_json,
                       struct PhzRun **out);

/**
 * Number of posterior snapshots across all chains.
 *
 * # Safety
 * `run` must be a live handle from this library.
 */
uintptr_t phz_run_num_samples(const struct PhzRun *run);

/**
 * Pooled and per-chain diagnostics as a JSON document.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer; the returned
 * string is released with `phz_string_free`.
 */
enum PhzStatus phz_run_diagnostics_json(const struct PhzRun *run, char **out);

/**
 * Submodel probability table as a JSON array of
 * `{label, occupancy, snapshot_fraction}` rows.
 *
 * # Safety
 * As for [`phz_run_diagnostics_json`].
 */
enum PhzStatus phz_run_submodels_json(const struct PhzRun *run, char **out);

/**
 * Posterior mean survival for a covariate profile given on the original
 * scale (`profile_len` must equal the dataset's covariate count; pass
 * `horizon <= 0` for the default of ten times the largest observed time).
 * Writes the posterior mean and the central 95% interval.
 *
 * # Safety
 * `run` must be a live handle; `profile` must point to `profile_len`
 * doubles (null allowed when `profile_len == 0`); the three outputs must be
 * valid pointers.
 */
enum PhzStatus phz_run_mean_survival(const struct PhzRun *run,
                                     const double *profile,
                                     uintptr_t profile_len,
                                     double horizon,
                                     double *mean,
                                     double *lo,
                                     double *hi);

/**
 * Release a run handle.
 *
 * # Safety
 * `run` must come from this library and not be freed twice.
 */
void phz_run_free(struct PhzRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYHAZARD_H */
