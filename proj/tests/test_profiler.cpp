#include <catch2/catch.hpp>

#include <sstream>

#include "pythia/profiler.hpp"
#include "test_helpers.hpp"

using namespace pythia;

namespace {

ConfigStats stats_of(double gbps, double lat, double watts, long samples = 20) {
    ConfigStats s;
    s.agg_gbps = gbps;
    s.agg_mpps = gbps / 11.73;
    s.avg_latency_ms = lat;
    s.avg_power_watts = watts;
    s.samples = samples;
    s.profiled = samples > 0;
    s.finalize_energy();
    return s;
}

Configuration config_of(int id, std::map<std::string, std::string> mapping, int batch) {
    Configuration c;
    c.id = id;
    c.mapping = std::move(mapping);
    c.batch_size = batch;
    return c;
}

}  // namespace

TEST_CASE("enumeration counts follow |devices|^|apps| x |batches|", "[profiler]") {
    auto grid7 = kDefaultBatchGrid;
    REQUIRE(grid7.size() == 7);

    auto cfgs = enumerate_configs({"a0", "a1"}, {"cpu", "igpu"}, grid7);
    CHECK(cfgs.size() == 28);

    CHECK(enumerate_configs({"a0"}, {"cpu"}, {1024}).size() == 1);
    CHECK(enumerate_configs({"a0", "a1"}, {"d0", "d1", "d2"}, grid7).size() == 63);

    // exhaustive formula check up to 3 apps x 3 devices
    std::vector<std::string> apps = {"a0", "a1", "a2"};
    std::vector<std::string> devs = {"d0", "d1", "d2"};
    for (std::size_t na = 1; na <= 3; ++na)
        for (std::size_t nd = 1; nd <= 3; ++nd)
            for (std::size_t nb = 1; nb <= 7; ++nb) {
                std::vector<std::string> a(apps.begin(), apps.begin() + na);
                std::vector<std::string> d(devs.begin(), devs.begin() + nd);
                std::vector<int> b(grid7.begin(), grid7.begin() + nb);
                std::size_t expect = 1;
                for (std::size_t i = 0; i < na; ++i) expect *= nd;
                expect *= nb;
                CHECK(enumerate_configs(a, d, b).size() == expect);
            }

    // deterministic ids across runs
    auto again = enumerate_configs({"a0", "a1"}, {"cpu", "igpu"}, grid7);
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        CHECK(cfgs[i].id == again[i].id);
        CHECK(cfgs[i].mapping == again[i].mapping);
        CHECK(cfgs[i].batch_size == again[i].batch_size);
    }

    CHECK_THROWS_AS(enumerate_configs({}, {"d"}, {1024}), InvariantError);
}

TEST_CASE("store indexes agree with linear scans after arbitrary updates", "[profiler]") {
    ConfigStore store;
    Rng rng(2024);
    std::vector<int> ids;
    for (int i = 0; i < 40; ++i) {
        ids.push_back(i);
        store.upsert(config_of(i, {{"a", "d" + std::to_string(i % 3)}}, 1024 << (i % 5)),
                     stats_of(5 + rng.unit() * 40, 0.5 + rng.unit() * 30, 40 + rng.unit() * 300));
    }

    auto check_heads = [&store]() {
        REQUIRE(store.indexes_consistent());
        int best_g = -1, best_l = -1, best_p = -1;
        double g = -1, l = 1e300, p = 1e300;
        for (const auto& [id, e] : store) {
            if (!e.stats.profiled) continue;
            if (e.stats.agg_gbps > g) {
                g = e.stats.agg_gbps;
                best_g = id;
            }
            if (e.stats.avg_latency_ms < l) {
                l = e.stats.avg_latency_ms;
                best_l = id;
            }
            if (e.stats.avg_power_watts < p) {
                p = e.stats.avg_power_watts;
                best_p = id;
            }
        }
        CHECK(store.best_gbps_id() == best_g);
        CHECK(store.best_latency_id() == best_l);
        CHECK(store.best_power_id() == best_p);
    };

    check_heads();
    for (int step = 0; step < 1000; ++step) {
        int id = ids[rng.below(ids.size())];
        store.update_stats(
            id, stats_of(5 + rng.unit() * 40, 0.5 + rng.unit() * 30, 40 + rng.unit() * 300,
                         rng.below(10) == 0 ? 0 : 20));
        if (step % 97 == 0) check_heads();
    }
    check_heads();
}

TEST_CASE("single entry heads and unprofiled sentinels", "[profiler]") {
    ConfigStore store;
    store.upsert(config_of(7, {{"a", "d0"}}, 4096), stats_of(12, 3, 80));
    CHECK(store.best_gbps_id() == 7);
    CHECK(store.best_latency_id() == 7);
    CHECK(store.best_power_id() == 7);

    // an unprofiled entry never surfaces through the indexes
    store.upsert(config_of(8, {{"a", "d1"}}, 4096), ConfigStats{});
    CHECK(store.size() == 2);
    CHECK(store.best_gbps_id() == 7);
}

TEST_CASE("store file round-trips", "[profiler]") {
    ConfigStore store;
    store.upsert(config_of(0, {{"aes0", "GTX1080Ti"}, {"dpi0", "UHDGraphics"}}, 4096),
                 stats_of(46.0077, 2.18905, 295));
    store.upsert(config_of(1, {{"aes0", "i7-8700K"}, {"dpi0", "i7-8700K"}}, 1024), stats_of(28.1, 0.76, 95));
    store.upsert(config_of(2, {{"aes0", "i7-8700K"}, {"dpi0", "i7-8700K"}}, 65536), ConfigStats{});

    std::ostringstream out;
    store.serialize(out);
    std::istringstream in(out.str());
    ConfigStore back = ConfigStore::deserialize(in);

    REQUIRE(back.size() == store.size());
    for (const auto& [id, e] : store) {
        const StoreEntry* b = back.find(id);
        REQUIRE(b != nullptr);
        CHECK(b->config.mapping == e.config.mapping);
        CHECK(b->config.batch_size == e.config.batch_size);
        CHECK(b->stats.agg_gbps == e.stats.agg_gbps);
        CHECK(b->stats.avg_latency_ms == e.stats.avg_latency_ms);
        CHECK(b->stats.avg_power_watts == e.stats.avg_power_watts);
        CHECK(b->stats.samples == e.stats.samples);
        CHECK(b->stats.profiled == e.stats.profiled);
    }

    // serialize(deserialize(x)) is byte-identical
    std::ostringstream out2;
    back.serialize(out2);
    CHECK(out.str() == out2.str());

    // duplicate ids rejected
    std::istringstream dup("1|a=d|1024|1|0.1|1|10|5\n1|a=d|1024|1|0.1|1|10|5\n");
    CHECK_THROWS_AS(ConfigStore::deserialize(dup), InvariantError);
}

TEST_CASE("coworker contexts include die siblings", "[profiler]") {
    auto devices = load_device_profiles(testutil::data_path("devices_default.txt"));
    std::map<std::string, std::string> kernels = {{"a0", "dpi"}, {"a1", "aes"}};

    // both apps on one device: plain same-device co-workers
    Configuration same = config_of(0, {{"a0", "UHDGraphics"}, {"a1", "UHDGraphics"}}, 4096);
    CHECK(coworker_kernels(same, "a0", kernels, devices) == std::vector<std::string>{"aes"});

    // cpu and integrated gpu share the die, so they see each other
    Configuration die = config_of(1, {{"a0", "UHDGraphics"}, {"a1", "i7-8700K"}}, 4096);
    CHECK(coworker_kernels(die, "a0", kernels, devices) == std::vector<std::string>{"aes"});
    CHECK(coworker_kernels(die, "a1", kernels, devices) == std::vector<std::string>{"dpi"});

    // discrete gpu is isolated from the die
    Configuration split = config_of(2, {{"a0", "UHDGraphics"}, {"a1", "GTX1080Ti"}}, 4096);
    CHECK(coworker_kernels(split, "a0", kernels, devices).empty());
    CHECK(coworker_kernels(split, "a1", kernels, devices).empty());
}

TEST_CASE("mixed coworker lookup blends measured slowdowns", "[profiler]") {
    PerfTable t = testutil::shipped_table();

    // exact contexts pass through untouched
    PerfRecord exact = lookup_for_context(t, "UHDGraphics", "md5", 16384, {"md5"});
    CHECK(exact.kernel_latency_ms == 13.9);
    CHECK_FALSE(exact.modeled);

    // a 2-kernel mixed context lands between solo and the measured contexts
    PerfRecord mixed = lookup_for_context(t, "UHDGraphics", "md5", 16384, {"aes", "dpi"});
    CHECK(mixed.modeled);
    PerfRecord solo = lookup_for_context(t, "UHDGraphics", "md5", 16384, {});
    CHECK(mixed.kernel_mpps < solo.kernel_mpps);
    CHECK(mixed.slowdown_frac > 0);
    CHECK(mixed.slowdown_frac < 1);
}
