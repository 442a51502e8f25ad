#include "starris/dataset.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace starris {

namespace {

constexpr int kSchemaVersion = 1;

nlohmann::json cfg_to_json(const SystemConfig& cfg) {
    std::ostringstream os;
    cfg.write(os);
    return nlohmann::json{{"schema_version", kSchemaVersion}, {"config", os.str()}};
}

void put_complex(std::ostream& out, Complex v) {
    const float re = static_cast<float>(v.real());
    const float im = static_cast<float>(v.imag());
    out.write(reinterpret_cast<const char*>(&re), sizeof(float));
    out.write(reinterpret_cast<const char*>(&im), sizeof(float));
}

Complex get_complex(std::istream& in) {
    float re, im;
    in.read(reinterpret_cast<char*>(&re), sizeof(float));
    in.read(reinterpret_cast<char*>(&im), sizeof(float));
    return {static_cast<Real>(re), static_cast<Real>(im)};
}

}  // namespace

void Dataset::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open dataset file for writing: " + path);

    nlohmann::json header = cfg_to_json(cfg);
    header["n_samples"] = samples.size();
    const std::string htext = header.dump();
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    out.put('\0');

    for (const ChannelRealization& cr : samples) {
        for (int l = 0; l < cr.n_ris; ++l)
            for (int m = 0; m < cr.n_elems_per_ris; ++m)
                for (int n = 0; n < cr.n_tx; ++n) put_complex(out, cr.g[l](m, n));
        for (int k = 0; k < cr.n_users; ++k)
            for (int s = 0; s < cr.total_elems(); ++s) put_complex(out, cr.h(k, s));
    }
    if (!out) throw IoError("write failure on dataset file: " + path);
}

Dataset Dataset::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file: " + path);

    std::string htext;
    std::getline(in, htext, '\0');
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad dataset header in " + path + ": " + e.what());
    }
    if (header.value("schema_version", -1) != kSchemaVersion)
        throw IoError("unsupported dataset schema version in " + path);

    Dataset ds;
    std::istringstream cfg_in(header.at("config").get<std::string>());
    ds.cfg = SystemConfig::parse(cfg_in);

    const std::size_t n = header.at("n_samples").get<std::size_t>();
    const SystemConfig& cfg = ds.cfg;
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ChannelRealization cr;
        cr.n_tx = cfg.n_tx;
        cr.n_users = cfg.n_users;
        cr.n_ris = cfg.n_ris;
        cr.n_elems_per_ris = cfg.n_elems_per_ris;
        cr.n_users_t = cfg.n_users_t_region;
        cr.g.assign(cfg.n_ris, CMat(cfg.n_elems_per_ris, cfg.n_tx));
        cr.h.resize(cfg.n_users, cfg.total_elems());
        for (int l = 0; l < cfg.n_ris; ++l)
            for (int m = 0; m < cfg.n_elems_per_ris; ++m)
                for (int nt = 0; nt < cfg.n_tx; ++nt) cr.g[l](m, nt) = get_complex(in);
        for (int k = 0; k < cfg.n_users; ++k)
            for (int s = 0; s < cfg.total_elems(); ++s) cr.h(k, s) = get_complex(in);
        if (!in) throw IoError("truncated dataset file: " + path);
        cr.assemble_equivalent();
        ds.samples.push_back(std::move(cr));
    }
    return ds;
}

Dataset generate_dataset(const SystemConfig& cfg, std::size_t n_samples,
                         const std::string& out_path) {
    if (n_samples < 1) throw DomainError("generate_dataset: n_samples must be >= 1");
    Dataset ds;
    ds.cfg = cfg;
    ds.samples.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) ds.samples.push_back(sample_channels(cfg, i));
    ds.save(out_path);
    return ds;
}

}  // namespace starris
