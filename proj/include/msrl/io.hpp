#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msrl/synthetic.hpp"
#include "msrl/trainer.hpp"

namespace msrl {

inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kConfigSchemaVersion = 1;

struct WorldSpec {
  AttributeSchema schema;
  int n_groups = 8;
  int pairs_per_group = 200;
};

// A fully-resolved experiment: either a synthetic world spec or a dataset
// path, plus the trainer configuration. Parsing is strict — unknown keys and
// invalid enum values are rejected, and an accepted config fully determines
// a run.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::optional<WorldSpec> world;
  std::optional<std::string> dataset_path;
  std::string output_dir;
  TrainerConfig trainer;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Effective configuration with every field explicit (run provenance echo).
std::string config_echo_json(const ExperimentConfig& config);

// Builds the catalog: generates the synthetic world (rng stream "world")
// or loads the dataset file.
GroupCatalog materialize_catalog(const ExperimentConfig& config);

// --- dataset files (versioned JSON) ---
std::string dataset_to_json(const GroupCatalog& catalog);
GroupCatalog dataset_from_json(const std::string& text);
void save_dataset(const GroupCatalog& catalog, const std::filesystem::path& path);
GroupCatalog load_dataset(const std::filesystem::path& path);

// --- checkpoints (versioned text, hex-float numerals, bit-exact resume) ---
std::string checkpoint_to_text(const TrainState& state);
TrainState checkpoint_from_text(const std::string& text);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

// --- metrics CSV ---
// Header: iteration,loss,mean_R_all,mean_R_selected,selected_total,lambda1,
// lambda2,gamma,val_acc followed by sel_g<k>,acc_g<k> per group. Reals carry
// 6 fractional digits; an empty selection prints mean_R_selected as nan.
std::string metrics_to_csv(const std::vector<MetricsSnapshot>& snapshots, int n_groups);
std::vector<MetricsSnapshot> metrics_from_csv(const std::string& text, int* n_groups = nullptr);
void export_metrics(const std::vector<MetricsSnapshot>& snapshots, int n_groups,
                    const std::filesystem::path& path);
std::vector<MetricsSnapshot> load_metrics(const std::filesystem::path& path,
                                          int* n_groups = nullptr);

// Exclusive writer lock on an output directory (lock file, removed on release).
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

}  // namespace msrl
