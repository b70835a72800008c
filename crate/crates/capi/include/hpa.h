/* C interface for the WCRT analysis toolkit.
 *
 * All handles are opaque and must be released with the matching *_free
 * function. Functions returning hpa_status report HPA_OK (0) on success.
 * Strings are NUL-terminated UTF-8. The library is thread-safe as long as a
 * handle is not used from two threads at once.
 */

#ifndef HPA_H
#define HPA_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct hpa_model hpa_model_t;
typedef struct hpa_result hpa_result_t;

typedef enum {
    HPA_OK = 0,
    HPA_ERR_NULL = 1,     /* a required pointer argument was NULL */
    HPA_ERR_UTF8 = 2,     /* input string was not valid UTF-8 */
    HPA_ERR_PARSE = 3,    /* JSON was malformed or the model invalid */
    HPA_ERR_ANALYSIS = 4, /* the analysis rejected the model */
    HPA_ERR_RANGE = 5     /* index out of range */
} hpa_status;

/* Parses a JSON system model; on success *out owns a new model handle. */
hpa_status hpa_model_parse(const char *json, hpa_model_t **out);
void hpa_model_free(hpa_model_t *model);

uint64_t hpa_model_task_count(const hpa_model_t *model);
uint64_t hpa_model_graph_count(const hpa_model_t *model);

/* Hybrid analysis. exclusion/dp_elimination toggle the two optimizations
 * (nonzero = enabled). On success *out owns a new result handle. */
hpa_status hpa_analyze(const hpa_model_t *model, int32_t exclusion,
                       int32_t dp_elimination, hpa_result_t **out);

/* Holistic baseline analysis (preemptive PEs only). */
hpa_status hpa_yw_analyze(const hpa_model_t *model, hpa_result_t **out);

/* Monte-Carlo simulation: max observed response of one graph over `samples`
 * random scenarios drawn from `seed`. */
hpa_status hpa_monte_carlo_wcrt(const hpa_model_t *model, uint64_t samples,
                                uint64_t seed, uint64_t graph,
                                uint64_t *out_wcrt);

int32_t hpa_result_schedulable(const hpa_result_t *result); /* 1 = yes */
int32_t hpa_result_converged(const hpa_result_t *result);   /* 1 = yes */
uint32_t hpa_result_iterations(const hpa_result_t *result);
hpa_status hpa_result_wcrt(const hpa_result_t *result, uint64_t graph,
                           uint64_t *out_wcrt);
void hpa_result_free(hpa_result_t *result);

#ifdef __cplusplus
}
#endif

#endif /* HPA_H */
