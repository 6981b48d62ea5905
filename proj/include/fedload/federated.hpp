#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fedload/adam.hpp"
#include "fedload/data.hpp"
#include "fedload/models.hpp"
#include "fedload/param_tree.hpp"
#include "fedload/rng.hpp"

namespace fedload::federated {

// Everything the orchestrator may tell a client: scalar hyperparameters only.
struct LocalTrainSpec {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    std::size_t round_index = 1;   // 1-based
    // Global epoch index of the client's first local epoch; keys the shuffle
    // schedule so round-by-round training replays a centralized run.
    std::size_t epoch_offset = 0;
    AdamConfig adam;
};

// Everything a client may send back: parameters and a scalar loss.
struct LocalUpdate {
    ParamTree params;
    double final_loss = 0.0;
};

// The privacy boundary. The orchestrator reaches clients only through this
// interface, which exchanges ParamTree and scalars — never sample data.
class FederatedClient {
public:
    virtual ~FederatedClient() = default;
    virtual const std::string& id() const = 0;
    virtual std::size_t sample_count() const = 0;
    virtual LocalUpdate local_update(const ParamTree& global_params,
                                     const LocalTrainSpec& spec) = 0;
};

// In-process client owning one household's training windows. Parameters
// always restart from the broadcast global model each round; the Adam moments
// are the client's own and persist across the rounds it is selected in, which
// makes a single-client federation replay centralized training exactly.
class SimulatedClient : public FederatedClient {
public:
    SimulatedClient(std::string client_id, models::ForecastConfig config,
                    std::vector<data::Sample> samples, std::uint64_t shuffle_seed);

    const std::string& id() const override { return id_; }
    std::size_t sample_count() const override { return samples_.size(); }
    LocalUpdate local_update(const ParamTree& global_params,
                             const LocalTrainSpec& spec) override;

private:
    std::string id_;
    models::ForecastConfig config_;
    std::vector<data::Sample> samples_;
    std::uint64_t shuffle_seed_;
    AdamState adam_state_;
};

enum class WeightingMode { Uniform, SampleSize };

struct FederatedConfig {
    std::size_t rounds = 20;
    std::size_t local_epochs = 5;
    double client_fraction = 1.0;
    std::uint64_t seed = 0;
    models::ForecastConfig forecaster;
    AdamConfig adam;
    WeightingMode weighting = WeightingMode::Uniform;
    // Local updates of a round may run on one thread per client; results are
    // bit-identical either way because aggregation order is fixed.
    bool parallel_clients = false;

    void validate() const;
};

struct RoundLog {
    std::size_t round = 0;  // 1-based
    std::vector<std::string> selected_clients;
    std::vector<double> local_losses;  // parallel to selected_clients
    double mean_local_loss = 0.0;
    double global_val_loss = 0.0;  // MSE of the aggregated model
};

struct FederatedResult {
    models::ForecastModel global_model;
    double initial_val_loss = 0.0;  // validation MSE of the untrained global model
    std::vector<RoundLog> rounds;
};

// Uniform sample without replacement of ceil(fraction * N) ids, returned
// sorted. Deterministic given the rng state.
std::vector<std::string> sample_clients(const std::vector<std::string>& client_ids,
                                        double fraction, Rng& round_rng);

// Elementwise mean per parameter path, accumulated as sum then divided by N
// so averaging identical trees is exact.
ParamTree fedavg(const std::vector<ParamTree>& param_sets);
// Weighted mean; weights must be nonnegative and sum to 1 within 1e-9.
ParamTree fedavg(const std::vector<ParamTree>& param_sets,
                 const std::vector<double>& weights);

FederatedResult run_federated(const std::vector<std::shared_ptr<FederatedClient>>& clients,
                              const FederatedConfig& config,
                              const std::vector<data::Sample>& validation);

using ClientFactory = std::function<std::vector<std::shared_ptr<FederatedClient>>()>;

struct SweepCell {
    std::size_t local_epochs = 0;
    double client_fraction = 0.0;
    std::vector<double> val_losses;  // one per round
};

// One federated run per (E, C) grid point, each over a fresh set of clients.
std::vector<SweepCell> robustness_sweep(const ClientFactory& make_clients,
                                        const FederatedConfig& base,
                                        const std::vector<std::size_t>& epoch_grid,
                                        const std::vector<double>& fraction_grid,
                                        const std::vector<data::Sample>& validation);

}  // namespace fedload::federated
