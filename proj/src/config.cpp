#include "starris/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace starris {

void SystemConfig::validate() const {
    if (n_tx < 1) throw DomainError("n_tx must be >= 1");
    if (n_users < 1) throw DomainError("n_users must be >= 1");
    if (n_ris < 1) throw DomainError("n_ris must be >= 1");
    if (n_elems_per_ris < 1) throw DomainError("n_elems_per_ris must be >= 1");
    if (n_users_t_region < 1 || n_users_t_region > n_users)
        throw DomainError("n_users_t_region must lie in [1, n_users]");
    if (p_max <= 0) throw DomainError("p_max must be positive");
    if (noise_power <= 0) throw DomainError("noise_power must be positive");
    if (rician_factor < 0) throw DomainError("rician_factor must be >= 0");
    if (carrier_wavelength <= 0) throw DomainError("carrier_wavelength must be positive");
    if (elem_spacing <= 0) throw DomainError("elem_spacing must be positive");
    if (user_region_t.area() <= 0 || user_region_r.area() <= 0)
        throw DomainError("user regions must have positive area");
}

SystemConfig SystemConfig::parse(std::istream& in) {
    SystemConfig cfg;
    std::map<std::string, std::function<void(const std::string&)>> setters = {
        {"n_tx", [&](const std::string& v) { cfg.n_tx = std::stoi(v); }},
        {"n_users", [&](const std::string& v) { cfg.n_users = std::stoi(v); }},
        {"n_ris", [&](const std::string& v) { cfg.n_ris = std::stoi(v); }},
        {"n_elems_per_ris", [&](const std::string& v) { cfg.n_elems_per_ris = std::stoi(v); }},
        {"n_users_t_region", [&](const std::string& v) { cfg.n_users_t_region = std::stoi(v); }},
        {"p_max_dbm", [&](const std::string& v) { cfg.p_max = dbm_to_watt(std::stod(v)); }},
        {"noise_dbm", [&](const std::string& v) { cfg.noise_power = dbm_to_watt(std::stod(v)); }},
        {"rician_factor", [&](const std::string& v) { cfg.rician_factor = std::stod(v); }},
        {"carrier_wavelength_m", [&](const std::string& v) { cfg.carrier_wavelength = std::stod(v); }},
        {"elem_spacing_m", [&](const std::string& v) { cfg.elem_spacing = std::stod(v); }},
        {"bs_height_m", [&](const std::string& v) { cfg.bs_height = std::stod(v); }},
        {"ris_height_m", [&](const std::string& v) { cfg.ris_height = std::stod(v); }},
        {"region_t_x_min_m", [&](const std::string& v) { cfg.user_region_t.x_min = std::stod(v); }},
        {"region_t_x_max_m", [&](const std::string& v) { cfg.user_region_t.x_max = std::stod(v); }},
        {"region_t_y_min_m", [&](const std::string& v) { cfg.user_region_t.y_min = std::stod(v); }},
        {"region_t_y_max_m", [&](const std::string& v) { cfg.user_region_t.y_max = std::stod(v); }},
        {"region_r_x_min_m", [&](const std::string& v) { cfg.user_region_r.x_min = std::stod(v); }},
        {"region_r_x_max_m", [&](const std::string& v) { cfg.user_region_r.x_max = std::stod(v); }},
        {"region_r_y_min_m", [&](const std::string& v) { cfg.user_region_r.y_min = std::stod(v); }},
        {"region_r_y_max_m", [&](const std::string& v) { cfg.user_region_r.y_max = std::stod(v); }},
        {"rng_seed", [&](const std::string& v) { cfg.rng_seed = std::stoull(v); }},
    };

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw IoError("config line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end())
            throw IoError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second(val);
    }
    cfg.validate();
    return cfg;
}

SystemConfig SystemConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return parse(in);
}

void SystemConfig::write(std::ostream& out) const {
    auto watt_to_dbm = [](Real w) { return 10.0 * std::log10(w) + 30.0; };
    out << "n_tx = " << n_tx << "\n"
        << "n_users = " << n_users << "\n"
        << "n_ris = " << n_ris << "\n"
        << "n_elems_per_ris = " << n_elems_per_ris << "\n"
        << "n_users_t_region = " << n_users_t_region << "\n"
        << "p_max_dbm = " << watt_to_dbm(p_max) << "\n"
        << "noise_dbm = " << watt_to_dbm(noise_power) << "\n"
        << "rician_factor = " << rician_factor << "\n"
        << "carrier_wavelength_m = " << carrier_wavelength << "\n"
        << "elem_spacing_m = " << elem_spacing << "\n"
        << "bs_height_m = " << bs_height << "\n"
        << "ris_height_m = " << ris_height << "\n"
        << "region_t_x_min_m = " << user_region_t.x_min << "\n"
        << "region_t_x_max_m = " << user_region_t.x_max << "\n"
        << "region_t_y_min_m = " << user_region_t.y_min << "\n"
        << "region_t_y_max_m = " << user_region_t.y_max << "\n"
        << "region_r_x_min_m = " << user_region_r.x_min << "\n"
        << "region_r_x_max_m = " << user_region_r.x_max << "\n"
        << "region_r_y_min_m = " << user_region_r.y_min << "\n"
        << "region_r_y_max_m = " << user_region_r.y_max << "\n"
        << "rng_seed = " << rng_seed << "\n";
}

}  // namespace starris
