#pragma once

#include <string>
#include <vector>

#include "starris/channel.hpp"
#include "starris/config.hpp"

namespace starris {

// Self-describing container: a JSON text header (schema version, config echo,
// sample count) terminated by '\0', followed by fixed-stride little-endian
// complex64 records. Each record stores the raw fading draws (G then h);
// h_equiv is reassembled on load.
struct Dataset {
    SystemConfig cfg;
    std::vector<ChannelRealization> samples;

    std::size_t size() const { return samples.size(); }

    // 90/10 train/validation split by record order.
    std::size_t train_count() const { return size() - size() / 10; }

    static Dataset load(const std::string& path);
    void save(const std::string& path) const;
};

// Samples `n_samples` realizations from substreams (cfg.rng_seed, i) and
// persists them. Returns the in-memory dataset.
Dataset generate_dataset(const SystemConfig& cfg, std::size_t n_samples,
                         const std::string& out_path);

}  // namespace starris
