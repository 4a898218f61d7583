#ifndef UNISCHED_H
#define UNISCHED_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum UnischedStatus {
  UNISCHED_STATUS_OK = 0,
  UNISCHED_STATUS_NULL_ARGUMENT = 1,
  UNISCHED_STATUS_INVALID_ARGUMENT = 2,
  UNISCHED_STATUS_IO = 3,
  UNISCHED_STATUS_PARSE = 4,
  UNISCHED_STATUS_SIMULATION = 5,
  UNISCHED_STATUS_OUT_OF_RANGE = 6,
  UNISCHED_STATUS_PANIC = 7,
} UnischedStatus;

typedef enum UnischedSource {
  UNISCHED_SOURCE_CAPABILITY = 0,
  UNISCHED_SOURCE_CAPACITY = 1,
} UnischedSource;

typedef enum UnischedPolicy {
  UNISCHED_POLICY_FCFS = 0,
  UNISCHED_POLICY_WFP = 1,
} UnischedPolicy;

// Opaque simulation outcome.
typedef struct UnischedResult UnischedResult;

// Opaque list of jobs.
typedef struct UnischedWorkload UnischedWorkload;

// Machine and scheduler settings for [`unisched_simulate`].
typedef struct UnischedOptions {
  uint32_t total_nodes;
  uint32_t min_alloc;
  enum UnischedPolicy policy;
  bool backfill;
} UnischedOptions;

// One scheduled job.
typedef struct UnischedJobRecord {
  uint64_t id;
  // 0 for capability, 1 for capacity.
  uint32_t source;
  // True for jobs submitted through the backfill queue.
  bool injected;
  uint64_t arrival;
  uint64_t start;
  uint64_t end;
  uint32_t requested_nodes;
  uint32_t allocated_nodes;
} UnischedJobRecord;

// Headline metrics. Means are NaN when no job of that source ran.
typedef struct UnischedSummary {
  uint64_t jobs;
  uint64_t unschedulable;
  uint64_t peak_allocated_nodes;
  double utilization_allocated;
  double utilization_effective;
  double capability_mean_wait;
  double capacity_mean_wait;
} UnischedSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *unisched_last_error(void);

// Creates an empty workload.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum UnischedStatus unisched_workload_new(struct UnischedWorkload **out);

// Appends one job. Ids must be unique within a workload.
//
// # Safety
// `w` must be a live handle from this library.
enum UnischedStatus unisched_workload_push(struct UnischedWorkload *w,
                                           uint64_t id,
                                           uint64_t arrival,
                                           uint32_t nodes,
                                           uint64_t walltime,
                                           uint64_t runtime,
                                           enum UnischedSource source);

// Reads an SWF or CSV trace. `format` is "swf", "csv" or null to infer it
// from the file extension.
//
// # Safety
// `path` and a non-null `format` must be NUL-terminated strings; `out` must
// be valid for one write.
enum UnischedStatus unisched_workload_load(const char *path,
                                           const char *format,
                                           enum UnischedSource source,
                                           struct UnischedWorkload **out);

// Generates `count` jobs from a named preset ("capability-like" or
// "capacity-like").
//
// # Safety
// `preset` must be a NUL-terminated string; `out` must be valid for one write.
enum UnischedStatus unisched_workload_synthesize(const char *preset,
                                                 size_t count,
                                                 uint64_t seed,
                                                 struct UnischedWorkload **out);

// Number of jobs in the workload; 0 for null.
//
// # Safety
// `w` must be null or a live handle.
size_t unisched_workload_len(const struct UnischedWorkload *w);

// # Safety
// `w` must be null or a handle not yet freed.
void unisched_workload_free(struct UnischedWorkload *w);

// Simulates `default_jobs` with `injected` (may be null) submitted to the
// backfill queue.
//
// # Safety
// Handles must be live; `options` and `out` must be valid pointers.
enum UnischedStatus unisched_simulate(const struct UnischedWorkload *default_jobs,
                                      const struct UnischedWorkload *injected,
                                      const struct UnischedOptions *options,
                                      struct UnischedResult **out);

// Shrinks a machine to `fraction` percent of its nodes (rounded down).
//
// # Safety
// `out_nodes` must be valid for one write.
enum UnischedStatus unisched_downsize(uint32_t total_nodes,
                                      uint32_t min_alloc,
                                      double fraction,
                                      uint32_t *out_nodes);

// Number of scheduled jobs; 0 for null.
//
// # Safety
// `r` must be null or a live handle.
size_t unisched_result_job_count(const struct UnischedResult *r);

// Copies the `index`-th job record (input order) into `out`.
//
// # Safety
// `r` must be a live handle and `out` valid for one write.
enum UnischedStatus unisched_result_job(const struct UnischedResult *r,
                                        size_t index,
                                        struct UnischedJobRecord *out);

// Fills `out` with headline metrics over `bucket`-second buckets. With
// `truncate`, metrics stop at the last arrival.
//
// # Safety
// `r` must be a live handle and `out` valid for one write.
enum UnischedStatus unisched_result_summary(const struct UnischedResult *r,
                                            uint64_t bucket,
                                            bool truncate,
                                            struct UnischedSummary *out);

// Full run summary as JSON. Release the string with [`unisched_string_free`].
//
// # Safety
// `r` must be a live handle and `out` valid for one write.
enum UnischedStatus unisched_result_summary_json(const struct UnischedResult *r,
                                                 uint64_t bucket,
                                                 bool truncate,
                                                 char **out);

// # Safety
// `r` must be null or a handle not yet freed.
void unisched_result_free(struct UnischedResult *r);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void unisched_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNISCHED_H */
