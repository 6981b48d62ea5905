#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedload/tensor.hpp"

namespace fedload::data {

// Uniformly sampled power series in watts.
struct PowerTrace {
    std::int64_t start_time = 0;  // unix seconds
    double period = 6.0;          // seconds per sample
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    std::int64_t timestamp_at(std::size_t index) const {
        return start_time + static_cast<std::int64_t>(static_cast<double>(index) * period);
    }
};

// One client household: aggregate channel plus named appliance channels,
// all on the same time grid.
struct HouseholdDataset {
    std::string household_id;
    PowerTrace aggregate;
    std::map<std::string, PowerTrace> appliances;
};

// Raw meter channel as read from disk: timestamped, possibly gappy.
struct RawChannel {
    std::vector<std::int64_t> timestamps;
    std::vector<double> watts;
};

struct SplitSpec {
    double train_minutes = 4070.0;
    double test_minutes = 250.0;
};

struct NormStats {
    double min = 0.0;
    double max = 0.0;
};

// One supervised example: an input window and the value to predict.
struct Sample {
    Tensor window;
    double target = 0.0;
};

// A synthetic appliance is a 2-state on/off process: either a Markov chain
// with per-step transition probabilities, or a deterministic duty cycle for
// strongly time-dependent loads.
struct SynthAppliance {
    std::string name;
    double rated_power = 100.0;
    double p_on_to_off = 0.05;
    double p_off_to_on = 0.05;
    double noise_std = 1.0;
    struct Cycle {
        std::size_t period_steps = 100;
        double duty = 0.5;
        std::size_t phase = 0;
    };
    std::optional<Cycle> cycle;  // set -> deterministic schedule, Markov ignored
};

struct SynthConfig {
    std::string household_id = "synth";
    std::vector<SynthAppliance> appliances;
    std::size_t length = 1000;
    double period = 6.0;
    std::int64_t start_time = 0;
    std::uint64_t seed = 0;
};

// Parses a "unix_ts watts" channel file. Timestamps must be nondecreasing.
RawChannel ingest_channel(const std::string& path);

// Parses a UKDALE labels file: one "<channel number> <appliance name>" per
// line. Returns entries in file order.
std::vector<std::pair<int, std::string>> parse_labels(const std::string& path);

// Loads <house_dir>/labels.dat, ingests <house_dir>/channel_<n>.dat for each
// entry, and aligns the channels onto one grid.
HouseholdDataset ingest_house(const std::string& house_dir, const std::string& household_id,
                              double period = 6.0, double gap_fill_limit = 180.0);

// Snaps raw channels onto a common uniform grid covering their overlapping
// range. Gaps up to gap_fill_limit seconds are forward-filled, longer gaps
// become zeros. A channel named "aggregate" or "mains" becomes the aggregate;
// otherwise the aggregate is the sum of the appliance channels.
HouseholdDataset align_and_fill(const std::vector<std::pair<std::string, RawChannel>>& channels,
                                const std::string& household_id, double period = 6.0,
                                double gap_fill_limit = 180.0);

NormStats compute_stats(const std::vector<double>& values);
// x' = (x - min) / (max - min); a constant channel maps to all zeros.
std::vector<double> minmax_normalize(const std::vector<double>& values, const NormStats& stats);
std::vector<double> denormalize(const std::vector<double>& values, const NormStats& stats);
double denormalize_value(double value, const NormStats& stats);

// Sliding stride-1 windows; target = value at (window end + horizon).
std::vector<Sample> make_windows(const std::vector<double>& values, std::size_t window_len,
                                 std::size_t horizon = 1);

// Contiguous prefix/suffix split on the sample grid.
std::pair<HouseholdDataset, HouseholdDataset> split_train_test(const HouseholdDataset& dataset,
                                                               const SplitSpec& spec);

HouseholdDataset synth_household(const SynthConfig& config);

// CSV round trip: header "timestamp,aggregate,<appliance...>".
void dataset_to_csv(const HouseholdDataset& dataset, const std::string& path);
HouseholdDataset dataset_from_csv(const std::string& path, const std::string& household_id);

// Writes to <path>.tmp then renames, so readers never observe partial files.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace fedload::data
