#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convect_uq/dnn.hpp"
#include "convect_uq/grid.hpp"
#include "convect_uq/pce.hpp"
#include "convect_uq/sampling.hpp"
#include "convect_uq/solver.hpp"

namespace convect_uq {

/// Case A: Ra and Pr normal with 2% relative spread, uniform walls.
struct CaseASpec {
    double mu_ra = 1e5;
    double ra_sigma_fraction = 0.02;
    double mu_pr = 7.5;
    double pr_sigma_fraction = 0.02;
    int level = 5;
    /// < 0 selects level - 1
    int order = -1;
    int test_points = 30;
    std::uint64_t test_seed = 101;
    int mc_samples = 10000;
    std::uint64_t mc_seed = 202;
    int surface_resolution = 21;

    std::vector<NormalMarginal> marginals() const;
    int pce_order() const { return order < 0 ? level - 1 : order; }
    void validate() const;
};

/// Case B: K i.i.d. normal hot-wall strips, Ra = 1e6 and Pr = 7.5 fixed.
struct CaseBSpec {
    double ra = 1e6;
    double pr = 7.5;
    int strips = 4;
    double mean = 1.05;
    double sigma = 0.01 / 3.0;
    int n_train = 60;
    int n_validation = 10;
    int n_test = 10;
    std::uint64_t train_seed = 1;
    std::uint64_t validation_seed = 2;
    std::uint64_t test_seed = 3;
    int mc_samples = 10000;
    std::uint64_t mc_seed = 4;

    std::vector<NormalMarginal> marginals() const;
    void validate() const;
};

enum class CaseKind { A, B };

/// Hot wall split into K bands along y, cold wall at 0.95.
BoundarySpec make_strip_boundary(const std::vector<double>& temps, double cold = 0.95);

// ---------------------------------------------------------------------------
// Per-sample outputs

/// The six scalar outputs used for sensitivity analysis, in this order.
inline const std::vector<std::string> scalar_output_names{"mean_nu", "max_nu", "mean_abs_u",
                                                          "max_abs_u", "mean_abs_v", "max_abs_v"};
inline const std::vector<std::string> field_quantities{"nu", "theta", "u", "v"};

struct SampleOutputs {
    Array2d nu;     // hot wall, (j, k)
    Array2d theta;  // z = 0.5 midplane, (i, j)
    Array2d u;
    Array2d v;
    Eigen::VectorXd scalars;  // scalar_output_names order
    SteadyDiagnostics diagnostics;

    const Array2d& field(const std::string& quantity) const;
};

SampleOutputs extract_outputs(const FlowState& state, const BoundarySpec& bc, const StructuredGrid& grid,
                              const SteadyDiagnostics& diagnostics);

/// Solver configuration and walls for one input row.
struct CaseSetup {
    SolverConfig solver;
    BoundarySpec boundary;
};

CaseSetup setup_for_sample(CaseKind kind, const Eigen::VectorXd& inputs, const SolverConfig& base_solver,
                           const BoundarySpec& base_boundary);

/// Runs one deterministic case to steady state; throws on blow-up or non-convergence.
SampleOutputs run_case(const CaseSetup& setup, const StructuredGrid& grid);

void write_sample_outputs(const std::string& dir, const SampleOutputs& outputs);
SampleOutputs read_sample_outputs(const std::string& dir);

// ---------------------------------------------------------------------------
// Ensembles

enum class SampleStatus { Pending, Done, Failed };

struct ManifestRow {
    int sample_id = 0;
    Eigen::VectorXd inputs;
    SampleStatus status = SampleStatus::Pending;
    /// relative to the manifest directory
    std::string output_dir;
};

/// CSV: `# convect_uq-manifest 1 seed=<u64> spec_hash=<hex>` then
/// `sample_id,xi_1,...,xi_d,status,output_dir`.
struct EnsembleManifest {
    std::vector<ManifestRow> rows;
    std::uint64_t seed = 0;
    std::uint64_t spec_hash = 0;

    std::vector<int> done_ids() const;
    std::vector<int> failed_ids() const;
};

void write_manifest(const std::string& path, const EnsembleManifest& manifest);
EnsembleManifest read_manifest(const std::string& path);

struct EnsembleOptions {
    int workers = 1;
    /// fraction of failed samples above which the ensemble errors out
    double max_failure_fraction = 0.10;
};

/// Runs one solver case per sample row into `dir` (manifest.csv plus one
/// sub-directory per sample). Rows already done, whose files still parse, are
/// skipped when the manifest's spec hash matches.
EnsembleManifest run_ensemble(CaseKind kind, const SampleMatrix& samples, const SolverConfig& solver,
                              const BoundarySpec& base_boundary, const StructuredGrid& grid, const std::string& dir,
                              const EnsembleOptions& options = {});

/// Done samples' outputs stacked as rows; `quantity` is "scalars" or a field quantity
/// (flattened with the first index fastest).
struct EnsembleData {
    std::vector<int> sample_ids;
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd outputs;
    std::vector<int> excluded;
};

EnsembleData gather_outputs(const EnsembleManifest& manifest, const std::string& dir, const std::string& quantity);

// ---------------------------------------------------------------------------
// Statistics

/// Welford accumulator over vectors of fixed length.
class RunningMoments {
public:
    explicit RunningMoments(Eigen::Index size = 0);

    void add(const Eigen::Ref<const Eigen::VectorXd>& x);
    long count() const { return count_; }
    const Eigen::VectorXd& mean() const { return mean_; }
    /// Unbiased (n - 1) variance; needs at least two samples.
    Eigen::VectorXd variance() const;

private:
    long count_ = 0;
    Eigen::VectorXd mean_;
    Eigen::VectorXd m2_;
};

struct MonteCarloMoments {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;
    long samples = 0;
};

/// Rows in, rows out.
using Surrogate = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// Single-pass (Welford) mean and unbiased std of the surrogate over n i.i.d.
/// draws from the marginals, reduced in draw order.
MonteCarloMoments monte_carlo_stats(const Surrogate& surrogate, const std::vector<NormalMarginal>& marginals, long n,
                                    std::uint64_t seed, long chunk = 4096);

struct MeanShift {
    Eigen::VectorXd difference;
    /// 100 * max|difference| / max|deterministic|
    double relative_shift_percent = 0.0;
};

MeanShift shift_of_mean(const Eigen::VectorXd& stochastic_mean, const Eigen::VectorXd& deterministic);

struct StatField {
    std::string quantity;
    Eigen::Index rows = 0, cols = 1;
    Eigen::VectorXd mean, stddev, deterministic, difference, ratio;
    double relative_shift_percent = 0.0;
    double max_std = 0.0;
    double max_abs_difference = 0.0;

    Array2d as_array(const Eigen::VectorXd& flat) const;
};

StatField make_stat_field(const std::string& quantity, Eigen::Index rows, Eigen::Index cols,
                          const MonteCarloMoments& moments, const Eigen::VectorXd& deterministic);

struct StatFields {
    std::vector<StatField> fields;

    const StatField& get(const std::string& quantity) const;
};

/// Array CSVs `<q>_{mean,std,deterministic,difference,ratio}.csv` and `summary.json`.
void write_stat_fields(const std::string& dir, const StatFields& stats);

/// Between-band over within-band variance of |field| when rows (y index) are
/// grouped into the strips' bands. Field indexed (j, k) on the hot wall.
double strip_structure_ratio(const Array2d& field, int strips);

// ---------------------------------------------------------------------------
// Case A

struct CaseAEnsembles {
    EnsembleManifest train, test, reference;
    std::string train_dir, test_dir, reference_dir;
};

CaseAEnsembles run_case_a_ensembles(const CaseASpec& spec, const SolverConfig& solver, const BoundarySpec& boundary,
                                    const StructuredGrid& grid, const std::string& root,
                                    const EnsembleOptions& options = {});

/// Reads the manifests written by run_case_a_ensembles; throws
/// MissingPrerequisiteError naming the first absent manifest.
CaseAEnsembles load_case_a_ensembles(const CaseASpec& spec, const std::string& root);

struct CaseAFit {
    /// "scalars", "nu", "theta", "u", "v"
    std::map<std::string, PceModel> models;
    /// per scalar output: RMS(surrogate - solver) / max|solver| on the test set
    Eigen::VectorXd test_error;
};

CaseAFit fit_case_a(const CaseASpec& spec, const CaseAEnsembles& ensembles);

/// Normalised RMS error of a fitted scalar model against a test set.
Eigen::VectorXd normalized_rms_error(const PceModel& scalars, const EnsembleData& test);

struct SobolTable {
    std::vector<std::string> outputs;
    std::vector<std::string> inputs;
    Eigen::MatrixXd total;  // outputs x inputs
};

SobolTable sobol_table(const PceModel& scalars, const std::vector<std::string>& input_names);

struct CaseAPropagation {
    StatFields stats;
    PceMoments scalar_moments;
    std::optional<SobolTable> sobol;
    Array2d mean_nu_surface;
};

CaseAPropagation propagate_case_a(const CaseASpec& spec, const CaseAFit& fit, const CaseAEnsembles& ensembles);

struct CaseAResult {
    CaseAEnsembles ensembles;
    CaseAFit fit;
    CaseAPropagation propagation;
};

CaseAResult case_a_pipeline(const CaseASpec& spec, const SolverConfig& solver, const BoundarySpec& boundary,
                            const StructuredGrid& grid, const std::string& root, const EnsembleOptions& options = {});

// ---------------------------------------------------------------------------
// Case B

struct CaseBEnsembles {
    EnsembleManifest train, validation, test, reference;
    std::string train_dir, validation_dir, test_dir, reference_dir;
};

CaseBEnsembles run_case_b_ensembles(const CaseBSpec& spec, const SolverConfig& solver, const BoundarySpec& boundary,
                                    const StructuredGrid& grid, const std::string& root,
                                    const EnsembleOptions& options = {});

CaseBEnsembles load_case_b_ensembles(const std::string& root);

struct CaseBTraining {
    std::map<std::string, MlpNetwork> networks;
    std::map<std::string, TrainHistory> histories;
    /// quantity -> (train error %, test error %)
    std::map<std::string, std::pair<double, double>> errors;
    std::vector<std::string> warnings;
};

/// `preset` is "desk" or "full"; `base` supplies optimiser settings (lambda is
/// taken from the preset).
CaseBTraining train_case_b(const CaseBSpec& spec, const CaseBEnsembles& ensembles, const std::string& preset,
                           const TrainConfig& base);

StatFields propagate_case_b(const CaseBSpec& spec, const std::map<std::string, MlpNetwork>& networks,
                            const CaseBEnsembles& ensembles);

struct CaseBResult {
    CaseBEnsembles ensembles;
    CaseBTraining training;
    StatFields stats;
};

CaseBResult case_b_pipeline(const CaseBSpec& spec, const SolverConfig& solver, const BoundarySpec& boundary,
                            const StructuredGrid& grid, const std::string& root, const std::string& preset,
                            const TrainConfig& train_config, const EnsembleOptions& options = {});

}  // namespace convect_uq
