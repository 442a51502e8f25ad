#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "starris/config.hpp"

using namespace starris;

TEST_CASE("defaults validate") {
    SystemConfig cfg;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("invariant violations throw") {
    SystemConfig cfg;
    cfg.n_tx = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);

    cfg = SystemConfig{};
    cfg.n_users_t_region = cfg.n_users + 1;
    CHECK_THROWS_AS(cfg.validate(), DomainError);

    cfg = SystemConfig{};
    cfg.n_users_t_region = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);

    cfg = SystemConfig{};
    cfg.p_max = 0.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);

    cfg = SystemConfig{};
    cfg.noise_power = -1.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);

    cfg = SystemConfig{};
    cfg.rician_factor = -0.5;
    CHECK_THROWS_AS(cfg.validate(), DomainError);

    cfg = SystemConfig{};
    cfg.user_region_t.x_max = cfg.user_region_t.x_min;  // zero area
    CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("unit conversions") {
    CHECK(dbm_to_watt(30.0) == doctest::Approx(1.0));
    CHECK(dbm_to_watt(0.0) == doctest::Approx(1e-3));
    CHECK(db_to_linear(10.0) == doctest::Approx(10.0));
    CHECK(db_to_linear(0.0) == doctest::Approx(1.0));
}

TEST_CASE("write/parse round trip") {
    SystemConfig cfg;
    cfg.n_tx = 8;
    cfg.n_users = 4;
    cfg.n_ris = 2;
    cfg.n_elems_per_ris = 4;
    cfg.n_users_t_region = 2;
    cfg.rng_seed = 42;
    cfg.user_region_r = Rect{-25.0, -15.0, 10.0, 20.0};

    std::stringstream ss;
    cfg.write(ss);
    const SystemConfig back = SystemConfig::parse(ss);

    CHECK(back.n_tx == cfg.n_tx);
    CHECK(back.n_users == cfg.n_users);
    CHECK(back.n_ris == cfg.n_ris);
    CHECK(back.n_elems_per_ris == cfg.n_elems_per_ris);
    CHECK(back.n_users_t_region == cfg.n_users_t_region);
    CHECK(back.rng_seed == cfg.rng_seed);
    CHECK(back.p_max == doctest::Approx(cfg.p_max).epsilon(1e-12));
    CHECK(back.noise_power == doctest::Approx(cfg.noise_power).epsilon(1e-12));
    CHECK(back.user_region_r.x_min == doctest::Approx(cfg.user_region_r.x_min));
    CHECK(back.user_region_r.y_max == doctest::Approx(cfg.user_region_r.y_max));
}

TEST_CASE("parse rejects unknown keys") {
    std::stringstream ss("n_tx = 4\nnot_a_key = 7\n");
    CHECK_THROWS_AS(SystemConfig::parse(ss), IoError);
}

TEST_CASE("parse skips comments and blank lines") {
    std::stringstream ss("# scenario\n\nn_tx = 4\n n_users = 2 \nn_users_t_region = 1\n");
    const SystemConfig cfg = SystemConfig::parse(ss);
    CHECK(cfg.n_tx == 4);
    CHECK(cfg.n_users == 2);
}
