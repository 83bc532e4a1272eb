#ifndef NKSPEC_NKSPEC_H
#define NKSPEC_NKSPEC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define NKS_API __declspec(dllexport)
#else
#define NKS_API __attribute__((visibility("default")))
#endif

/* Status codes.  Every call returns one; details via nks_last_error(). */
enum {
  NKS_OK = 0,
  NKS_INVALID = 1,   /* null pointer or out-of-range argument */
  NKS_CONFIG = 2,    /* malformed specification */
  NKS_RESOURCE = 3,  /* memory cap or enumeration guard exceeded */
  NKS_NUMERICAL = 4, /* factorization or convergence failure */
  NKS_INTERNAL = 5
};

enum { NKS_NNGP = 0, NKS_NTK = 1 };
enum { NKS_FLATTEN = 0, NKS_GAP = 1 };
enum { NKS_METHOD_JET = 0, NKS_METHOD_MONTE_CARLO = 1 };

typedef struct nks_dual nks_dual;
typedef struct nks_arch nks_arch;
typedef struct nks_modes nks_modes;
typedef struct nks_table nks_table;

/* Message of the last failed call on this thread ("" if none). */
NKS_API const char* nks_last_error(void);
/* Strings returned through char** are allocated by the library. */
NKS_API void nks_string_free(char* s);

/* Duals: "identity", "gaussian:1.0", "centered_exp:1.0", "poly:3:1.0", "relu". */
NKS_API int nks_dual_parse(const char* spec, nks_dual** out);
NKS_API void nks_dual_free(nks_dual* d);
NKS_API int nks_dual_eval(const nks_dual* d, double t, double* value, double* derivative);
NKS_API int nks_dual_class(const nks_dual* d, char** out);

/* Architectures.  family: hr_cnn, d_cnn, mlp, s_cnn.  depth is used by mlp;
   readout and act_after_readout by hr_cnn. */
NKS_API int nks_arch_family(const char* family, int p, int depth, const nks_dual* act, int readout,
                            int act_after_readout, nks_arch** out);
NKS_API int nks_arch_dcnn(int p, int k, int L, int w, const char* alpha_p, const char* alpha_k, const char* alpha_w,
                          const nks_dual* act, int readout, int act_after_readout, nks_arch** out);
NKS_API int nks_arch_parse_text(const char* text, nks_arch** out);
NKS_API void nks_arch_free(nks_arch* a);
NKS_API int nks_arch_to_text(const nks_arch* a, char** out);
NKS_API int nks_arch_describe(const nks_arch* a, char** out);
NKS_API int nks_arch_reference_dim(const nks_arch* a, int* out);
NKS_API int nks_arch_readout(const nks_arch* a, int* out);
NKS_API int nks_arch_num_inputs(const nks_arch* a, size_t* out);
/* Node id of the i-th input in offset order. */
NKS_API int nks_arch_input_id(const nks_arch* a, size_t i, int* out);
/* Human-readable report; *all_passed set to 1 when every rule holds. */
NKS_API int nks_arch_validate(const nks_arch* a, double c, double C, char** report, int* all_passed);

/* Kernels.  t holds one correlation per input (offset order). */
NKS_API int nks_kernel_eval(const nks_arch* a, int kind, const double* t, size_t n, double* out);
/* Row-major X (m x dim) and Y (n x dim); out is m x n row-major.  Y may be
   NULL for the symmetric m x m matrix of X. */
NKS_API int nks_kernel_matrix(const nks_arch* a, int kind, const double* X, size_t m, const double* Y, size_t n,
                              int threads, double* out);
NKS_API int nks_write_kernel_matrix(const char* path, const double* M, size_t rows, size_t cols);

/* Multi-indices are parallel arrays (input node ids, degrees). */
NKS_API int nks_derivative_at_zero(const nks_arch* a, int kind, const int* nodes, const int* degrees, size_t k,
                                   double* out);
NKS_API int nks_eigenvalue(const nks_arch* a, int kind, const int* nodes, const int* degrees, size_t k, int method,
                           size_t samples, uint64_t seed, double* value, double* std_error);

/* Indices as exact fractions ("3/4"); *finite is 0 when not learnable. */
NKS_API int nks_index_triple(const nks_arch* a, const int* nodes, const int* degrees, size_t k, int* finite, char** S,
                             char** F, char** L);
/* CSV "L,degree,support_size,patterns,dimension,representative"; max_L may be NULL. */
NKS_API int nks_learning_sequence(const nks_arch* a, int max_degree, const char* max_L, char** csv);
NKS_API int nks_eigenspace_dimension(const nks_arch* a, const char* L_target, int max_degree, char** out);
/* Rejects budgets equal to a learning index.  CSV "side,L,degree,support_size,patterns". */
NKS_API int nks_budget_partition(const nks_arch* a, const char* budget, int max_degree, char** csv);

/* Catalogue modes: Y1 Y2 Y3 Y4 Y5star Y5 Y6 Y7. */
NKS_API int nks_mode_ids(char** comma_separated);
NKS_API int nks_mode_degree(const char* id, int* out);
/* Representative multi-index of a mode on `a` (reference dim p^4).  Writes at
   most cap entries; *k receives the support size. */
NKS_API int nks_mode_multi_index(const char* id, int p, const nks_arch* a, int* nodes, int* degrees, size_t cap,
                                 size_t* k);

/* Mode sets normalized on a fresh sample of n_normalize points.  ids is a
   comma-separated list (NULL or "" for all). */
NKS_API int nks_modes_build(int p, uint64_t seed, int constant_coefficients, int project, size_t n_normalize,
                            const char* ids, nks_modes** out);
NKS_API void nks_modes_free(nks_modes* m);
NKS_API int nks_modes_count(const nks_modes* m, size_t* out);
NKS_API int nks_modes_json(const nks_modes* m, size_t i, char** out);
NKS_API int nks_modes_eval(const nks_modes* m, size_t i, const double* X, size_t rows, double* out);

NKS_API int nks_sample_inputs(size_t m, int patches, int p, uint64_t seed, double* out);
NKS_API int nks_gradient_flow_residual(double lambda, double t, double* out);

/* Learning curves. */
typedef struct nks_curve_spec {
  const char* run_id;
  const char* arch_name;
  int kind;
  int p;
  const size_t* m_schedule;
  size_t m_count;
  size_t m_test;
  size_t m_normalize;
  const uint64_t* seeds;
  size_t seed_count;
  const char* mode_ids; /* comma-separated, NULL or "" for all */
  int constant_coefficients;
  int project;
  int timing;
  int threads;
  size_t mem_cap;
  double jitter_scale;
} nks_curve_spec;

NKS_API void nks_curve_spec_init(nks_curve_spec* spec);

typedef struct nks_curve_row {
  const char* run_id;
  const char* arch;
  const char* kernel_kind;
  const char* readout;
  size_t m_train;
  const char* mode_id;
  const char* L_index;
  uint64_t seed;
  double residual;
  double normalized_residual;
  double train_mse;
  double seconds;
} nks_curve_row;

NKS_API int nks_learning_curve(const nks_arch* a, const nks_curve_spec* spec, nks_table** out);
NKS_API int nks_gap_vs_flatten(const nks_arch* flatten, const nks_arch* gap, const char* gap_name,
                               const nks_curve_spec* spec, nks_table** out);
NKS_API void nks_table_free(nks_table* t);
NKS_API int nks_table_size(const nks_table* t, size_t* out);
/* Row views stay valid until the table is freed. */
NKS_API int nks_table_row(const nks_table* t, size_t i, nks_curve_row* out);
/* Header plus one line per row. */
NKS_API int nks_table_csv(const nks_table* t, char** out);

#ifdef __cplusplus
}
#endif

#endif
