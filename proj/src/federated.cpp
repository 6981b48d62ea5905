#include "fedload/federated.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <set>
#include <stdexcept>
#include <thread>

#include "fedload/errors.hpp"

namespace fedload::federated {

SimulatedClient::SimulatedClient(std::string client_id, models::ForecastConfig config,
                                 std::vector<data::Sample> samples,
                                 std::uint64_t shuffle_seed)
    : id_(std::move(client_id)),
      config_(std::move(config)),
      samples_(std::move(samples)),
      shuffle_seed_(shuffle_seed) {}

LocalUpdate SimulatedClient::local_update(const ParamTree& global_params,
                                          const LocalTrainSpec& spec) {
    if (samples_.empty()) {
        throw std::invalid_argument("client '" + id_ + "' has no training samples");
    }
    models::ForecastModel model{config_, global_params};
    models::TrainOptions options;
    options.epochs = spec.epochs;
    options.batch_size = spec.batch_size;
    options.seed = shuffle_seed_;
    options.epoch_offset = spec.epoch_offset;
    options.adam = spec.adam;
    auto result = models::train_supervised(model, samples_, options, &adam_state_);
    const double final_loss = result.loss_history.empty()
                                  ? models::evaluate_mse(result.model, samples_)
                                  : result.loss_history.back();
    return {std::move(result.model.params), final_loss};
}

void FederatedConfig::validate() const {
    if (rounds < 1) throw ConfigError("federated config: rounds must be >= 1");
    if (local_epochs < 1) throw ConfigError("federated config: local_epochs must be >= 1");
    if (!(client_fraction > 0.0) || client_fraction > 1.0) {
        throw ConfigError("federated config: client_fraction must be in (0, 1]");
    }
    forecaster.validate();
}

std::vector<std::string> sample_clients(const std::vector<std::string>& client_ids,
                                        double fraction, Rng& round_rng) {
    if (client_ids.empty()) throw std::invalid_argument("sample_clients: no clients");
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw std::invalid_argument("sample_clients: fraction must be in (0, 1]");
    }
    const auto n = client_ids.size();
    const auto count = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n)));
    std::vector<std::string> pool = client_ids;
    round_rng.shuffle(pool);
    pool.resize(std::min(count, n));
    std::sort(pool.begin(), pool.end());
    return pool;
}

ParamTree fedavg(const std::vector<ParamTree>& param_sets) {
    if (param_sets.empty()) throw std::invalid_argument("fedavg: no parameter sets");
    ParamTree acc = param_sets.front();
    for (std::size_t i = 1; i < param_sets.size(); ++i) {
        param_sets[i].require_same_layout(param_sets.front(), "fedavg");
        auto acc_it = acc.begin();
        for (const auto& [path, tensor] : param_sets[i]) {
            add_in_place(acc_it->second, tensor);
            ++acc_it;
        }
    }
    const auto n = static_cast<double>(param_sets.size());
    for (auto& [path, tensor] : acc) {
        for (double& v : tensor.data()) v /= n;
    }
    return acc;
}

ParamTree fedavg(const std::vector<ParamTree>& param_sets,
                 const std::vector<double>& weights) {
    if (param_sets.empty()) throw std::invalid_argument("fedavg: no parameter sets");
    if (weights.size() != param_sets.size()) {
        throw std::invalid_argument("fedavg: " + std::to_string(param_sets.size()) +
                                    " parameter sets but " + std::to_string(weights.size()) +
                                    " weights");
    }
    double weight_sum = 0.0;
    for (const double w : weights) {
        if (w < 0.0) throw std::invalid_argument("fedavg: negative weight");
        weight_sum += w;
    }
    if (std::fabs(weight_sum - 1.0) > 1e-9) {
        throw std::invalid_argument("fedavg: weights sum to " + std::to_string(weight_sum) +
                                    ", expected 1");
    }
    ParamTree acc = ParamTree::zeros_like(param_sets.front());
    for (std::size_t i = 0; i < param_sets.size(); ++i) {
        param_sets[i].require_same_layout(param_sets.front(), "fedavg");
        auto acc_it = acc.begin();
        for (const auto& [path, tensor] : param_sets[i]) {
            add_in_place(acc_it->second, scale(tensor, weights[i]));
            ++acc_it;
        }
    }
    return acc;
}

namespace {

[[noreturn]] void rethrow_with_context(const std::string& prefix) {
    try {
        throw;
    } catch (const ShapeError& e) {
        throw ShapeError(prefix + e.what());
    } catch (const LayoutError& e) {
        throw LayoutError(prefix + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(prefix + e.what());
    } catch (const ParseError& e) {
        throw ParseError(prefix + e.what());
    } catch (const NumericError& e) {
        throw NumericError(prefix + e.what());
    } catch (const AlignmentError& e) {
        throw AlignmentError(prefix + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(prefix + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(prefix + e.what());
    }
}

}  // namespace

FederatedResult run_federated(const std::vector<std::shared_ptr<FederatedClient>>& clients,
                              const FederatedConfig& config,
                              const std::vector<data::Sample>& validation) {
    config.validate();
    if (clients.empty()) throw std::invalid_argument("run_federated: no clients");
    if (validation.empty()) throw std::invalid_argument("run_federated: empty validation set");

    std::vector<std::string> ids;
    std::set<std::string> unique_ids;
    for (const auto& client : clients) {
        if (!client) throw std::invalid_argument("run_federated: null client");
        ids.push_back(client->id());
        if (!unique_ids.insert(client->id()).second) {
            throw std::invalid_argument("run_federated: duplicate client id '" + client->id() +
                                        "'");
        }
    }
    std::sort(ids.begin(), ids.end());

    const auto client_by_id = [&](const std::string& id) -> FederatedClient& {
        for (const auto& client : clients) {
            if (client->id() == id) return *client;
        }
        throw std::logic_error("run_federated: lost client '" + id + "'");
    };

    FederatedResult result;
    result.global_model = models::build_forecaster(config.forecaster);
    result.initial_val_loss = models::evaluate_mse(result.global_model, validation);
    result.rounds.reserve(config.rounds);

    for (std::size_t round = 1; round <= config.rounds; ++round) {
        Rng round_rng(Rng::mix(config.seed, round));
        const auto selected = sample_clients(ids, config.client_fraction, round_rng);

        LocalTrainSpec spec;
        spec.epochs = config.local_epochs;
        spec.batch_size = config.forecaster.batch_size;
        spec.round_index = round;
        spec.epoch_offset = (round - 1) * config.local_epochs;
        spec.adam = config.adam;

        std::vector<LocalUpdate> updates(selected.size());
        std::vector<std::exception_ptr> failures(selected.size());
        const auto run_client = [&](std::size_t k) {
            try {
                updates[k] = client_by_id(selected[k]).local_update(result.global_model.params,
                                                                    spec);
            } catch (...) {
                failures[k] = std::current_exception();
            }
        };
        if (config.parallel_clients && selected.size() > 1) {
            std::vector<std::thread> workers;
            workers.reserve(selected.size());
            for (std::size_t k = 0; k < selected.size(); ++k) {
                workers.emplace_back(run_client, k);
            }
            for (auto& worker : workers) worker.join();
        } else {
            for (std::size_t k = 0; k < selected.size(); ++k) run_client(k);
        }
        for (std::size_t k = 0; k < selected.size(); ++k) {
            if (failures[k]) {
                try {
                    std::rethrow_exception(failures[k]);
                } catch (...) {
                    rethrow_with_context("round " + std::to_string(round) + ", client '" +
                                         selected[k] + "': ");
                }
            }
        }

        std::vector<ParamTree> param_sets;
        param_sets.reserve(updates.size());
        RoundLog log;
        log.round = round;
        log.selected_clients = selected;
        for (std::size_t k = 0; k < updates.size(); ++k) {
            param_sets.push_back(std::move(updates[k].params));
            log.local_losses.push_back(updates[k].final_loss);
            log.mean_local_loss += updates[k].final_loss;
        }
        log.mean_local_loss /= static_cast<double>(updates.size());

        if (config.weighting == WeightingMode::Uniform) {
            result.global_model.params = fedavg(param_sets);
        } else {
            std::vector<double> weights(selected.size());
            double total = 0.0;
            for (std::size_t k = 0; k < selected.size(); ++k) {
                weights[k] = static_cast<double>(client_by_id(selected[k]).sample_count());
                total += weights[k];
            }
            if (total <= 0.0) {
                throw std::invalid_argument("run_federated: sample-size weighting with no "
                                            "samples");
            }
            for (double& w : weights) w /= total;
            result.global_model.params = fedavg(param_sets, weights);
        }

        log.global_val_loss = models::evaluate_mse(result.global_model, validation);
        result.rounds.push_back(std::move(log));
    }
    return result;
}

std::vector<SweepCell> robustness_sweep(const ClientFactory& make_clients,
                                        const FederatedConfig& base,
                                        const std::vector<std::size_t>& epoch_grid,
                                        const std::vector<double>& fraction_grid,
                                        const std::vector<data::Sample>& validation) {
    if (epoch_grid.empty() || fraction_grid.empty()) {
        throw std::invalid_argument("robustness_sweep: empty grid");
    }
    std::vector<SweepCell> cells;
    cells.reserve(epoch_grid.size() * fraction_grid.size());
    for (const std::size_t local_epochs : epoch_grid) {
        for (const double fraction : fraction_grid) {
            FederatedConfig config = base;
            config.local_epochs = local_epochs;
            config.client_fraction = fraction;
            const auto clients = make_clients();
            const auto result = run_federated(clients, config, validation);
            SweepCell cell;
            cell.local_epochs = local_epochs;
            cell.client_fraction = fraction;
            cell.val_losses.reserve(result.rounds.size());
            for (const auto& log : result.rounds) cell.val_losses.push_back(log.global_val_loss);
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

}  // namespace fedload::federated
