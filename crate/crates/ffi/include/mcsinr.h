/* C interface for the mcsinr simulator.
 *
 * Handles are opaque; every fallible call returns a status code and leaves a
 * thread-local message readable through mcsinr_last_error(). Hand-maintained;
 * the crate test suite checks it against the exported symbols.
 */

#ifndef MCSINR_H
#define MCSINR_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. */
#define MCSINR_OK 0
#define MCSINR_ERR_NULL 1
#define MCSINR_ERR_INVALID 2
#define MCSINR_ERR_IO 3
#define MCSINR_ERR_RUN 4

/* Topology kinds. */
#define MCSINR_TOPO_UNIFORM_DISK 0
#define MCSINR_TOPO_GRID 1
#define MCSINR_TOPO_EXPONENTIAL_CHAIN 2
#define MCSINR_TOPO_CLUSTERED 3

/* Aggregate functions. */
#define MCSINR_AGG_SUM 0
#define MCSINR_AGG_MAX 1
#define MCSINR_AGG_MIN 2
#define MCSINR_AGG_COUNT 3
#define MCSINR_AGG_AVERAGE 4

typedef struct McsinrTopology McsinrTopology;
typedef struct McsinrRun McsinrRun;

typedef struct McsinrParams {
    double power;
    double alpha;
    double beta;
    double noise;
    double epsilon;
} McsinrParams;

const char *mcsinr_last_error(void);
const char *mcsinr_version(void);

int mcsinr_topology_generate(int kind, uint64_t n, double extent, uint64_t seed,
                             McsinrTopology **out);
int mcsinr_topology_load(const char *path, McsinrTopology **out);
int mcsinr_topology_save(const McsinrTopology *topo, const char *path);
uint64_t mcsinr_topology_len(const McsinrTopology *topo);
void mcsinr_topology_free(McsinrTopology *topo);

int mcsinr_comm_graph_stats(const McsinrTopology *topo, McsinrParams params,
                            uint64_t *out_delta, int64_t *out_diameter);

int mcsinr_aggregate_run(const McsinrTopology *topo, McsinrParams params,
                         uint16_t channels, uint64_t seed, int function,
                         const int64_t *inputs, uint64_t inputs_len,
                         McsinrRun **out);
int mcsinr_color_run(const McsinrTopology *topo, McsinrParams params,
                     uint16_t channels, uint64_t seed, McsinrRun **out);

int mcsinr_run_ok(const McsinrRun *run);
uint64_t mcsinr_run_rounds(const McsinrRun *run);
double mcsinr_run_value_at(const McsinrRun *run, uint64_t node);
int64_t mcsinr_run_color_at(const McsinrRun *run, uint64_t node);
uint64_t mcsinr_run_clusters(const McsinrRun *run);
void mcsinr_run_free(McsinrRun *run);

#ifdef __cplusplus
}
#endif

#endif /* MCSINR_H */
