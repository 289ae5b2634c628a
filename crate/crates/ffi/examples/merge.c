/* Trains two small nets, aligns and merges them through the C ABI.
 *
 *   cargo build -p npmerge-ffi
 *   cc -Icrates/ffi/include crates/ffi/examples/merge.c -Ltarget/debug -lnpmerge_ffi -o merge
 *   LD_LIBRARY_PATH=target/debug ./merge
 */
#include <stdio.h>

#include "npmerge.h"

#define CHECK(call)                                              \
  do {                                                           \
    if ((call) != NPMK_STATUS_OK) {                              \
      fprintf(stderr, "%s failed: %s\n", #call, npmk_last_error()); \
      return 1;                                                  \
    }                                                            \
  } while (0)

int main(void) {
  NpmkDataset *data = NULL;
  NpmkModel *a = NULL, *b = NULL, *aligned = NULL, *merged = NULL;
  NpmkPermutations *perms = NULL;
  size_t widths[] = {4, 16, 3};
  double accuracy, loss, mean_alpha;

  CHECK(npmk_dataset_synth_blobs(3, 50, 4, 0.8, 1, &data));
  CHECK(npmk_train(widths, 3, true, data, 5, 0.01, 16, 1, &a));
  CHECK(npmk_train(widths, 3, true, data, 5, 0.01, 16, 2, &b));
  CHECK(npmk_align_permute(a, b, data, &perms));
  CHECK(npmk_apply_alignment(b, perms, &aligned));
  CHECK(npmk_np_merge(a, aligned, data, 0.01, 10, 32, 0, &merged, &mean_alpha));
  CHECK(npmk_evaluate(merged, data, &accuracy, &loss));
  printf("npmerge %s: accuracy %.3f, mean alpha %.3f\n", npmk_version(), accuracy, mean_alpha);

  npmk_model_free(merged);
  npmk_model_free(aligned);
  npmk_model_free(b);
  npmk_model_free(a);
  npmk_permutations_free(perms);
  npmk_dataset_free(data);
  return 0;
}
