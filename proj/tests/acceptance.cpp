// Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
// Run via ctest (acceptance_criterion_N) or directly: ./acceptance "[cN]".

#include <catch2/catch.hpp>

#include <chrono>
#include <cstring>
#include <iostream>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "pythia/livebackend.hpp"
#include "pythia/simengine.hpp"
#include "test_helpers.hpp"

using namespace pythia;

namespace {

struct Verdict {
    const char* name;
    bool ok;
};

void announce(int criterion, std::initializer_list<Verdict> parts) {
    bool all = true;
    for (const auto& p : parts) all = all && p.ok;
    std::ostringstream line;
    line << "ACCEPTANCE C" << criterion << (all ? " PASS" : " FAIL");
    for (const auto& p : parts) line << "  [" << (p.ok ? "ok" : "FAIL") << "] " << p.name;
    std::cout << line.str() << "\n";
}

const PerfTable& table() {
    static PerfTable t = testutil::shipped_table();
    return t;
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(PYTHIA_CLI_BIN) + " " + args + " > /tmp/acc_cli_out.txt 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

Trace run_scenario(const std::string& name, ConfigStore* store_out = nullptr) {
    ScenarioSpec s = parse_scenario(testutil::scenario_path(name));
    SimEngine prof(table(), s);
    ConfigStore store =
        build_store(enumerate_configs(s.app_ids(), s.device_ids(), s.batch_grid), s.training_batches, prof);
    SimEngine eng(table(), s);
    Trace tr = eng.run(store);
    if (store_out) *store_out = std::move(store);
    return tr;
}

double mean_processed(const Trace& tr, double t0, double t1) {
    double sum = 0;
    int n = 0;
    for (const auto& r : tr.rows)
        if (r.t_ms > t0 && r.t_ms <= t1) {
            sum += r.processed_gbps;
            ++n;
        }
    return n ? sum / n : 0;
}

double mean_total_power(const Trace& tr, double t0, double t1) {
    double sum = 0;
    int n = 0;
    for (const auto& r : tr.rows)
        if (r.t_ms > t0 && r.t_ms <= t1) {
            for (double w : r.dev_watts) sum += w;
            ++n;
        }
    return n ? sum / n : 0;
}

std::vector<std::string> powered_devices(const Trace& tr, const TraceRow& row) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < tr.device_order.size(); ++i) {
        const DeviceProfile& d = table().device(tr.device_order[i]);
        if (row.dev_watts[i] > d.off_watts + 1e-6) out.push_back(tr.device_order[i]);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
TEST_CASE("C1: configuration enumeration", "[c1]") {
    double t0 = now_s();

    // 2 apps x 2 devices x 7 batch sizes through the CLI
    testutil::write_file("/tmp/acc_two_devices.txt",
                         "GTX1080Ti    discrete-gpu   250  55   0  50  8\n"
                         "UHDGraphics  integrated-gpu  45   8   0  20  8\n");
    // calibration restricted to the two devices
    std::istringstream all(testutil::slurp(testutil::data_path("tables_1_2_3.csv")));
    std::ostringstream filtered;
    std::string line;
    while (std::getline(all, line))
        if (line.rfind("i7-8700K", 0) != 0) filtered << line << "\n";
    testutil::write_file("/tmp/acc_two_dev_cal.csv", filtered.str());
    testutil::write_file("/tmp/acc_c1.scn",
                         "pythia-scenario v1\n"
                         "name acc_c1\n"
                         "horizon_ms 1000\n"
                         "devices_file /tmp/acc_two_devices.txt\n"
                         "calibration_file /tmp/acc_two_dev_cal.csv\n"
                         "policy max_throughput\n"
                         "app aes0 aes 0,1\n"
                         "app dpi0 dpi 2,3\n"
                         "rate aes0 0 1\n"
                         "rate dpi0 0 1\n");
    int rc = run_cli("calibrate --scenario /tmp/acc_c1.scn --out /tmp/acc_c1_store.txt");
    std::string out = testutil::slurp("/tmp/acc_cli_out.txt");
    bool count_28 = rc == 0 && out.find("profiled 28 configurations") != std::string::npos;

    // exhaustive formula check up to 3 apps x 3 devices x 7 batches
    bool formula_ok = true;
    std::vector<std::string> apps = {"a0", "a1", "a2"}, devs = {"d0", "d1", "d2"};
    for (std::size_t na = 1; na <= 3 && formula_ok; ++na)
        for (std::size_t nd = 1; nd <= 3 && formula_ok; ++nd)
            for (std::size_t nb = 1; nb <= 7 && formula_ok; ++nb) {
                std::size_t expect = nb;
                for (std::size_t i = 0; i < na; ++i) expect *= nd;
                formula_ok = enumerate_configs({apps.begin(), apps.begin() + na}, {devs.begin(), devs.begin() + nd},
                                               std::vector<int>(kDefaultBatchGrid.begin(),
                                                                kDefaultBatchGrid.begin() + nb))
                                 .size() == expect;
            }

    double elapsed = now_s() - t0;
    bool fast = elapsed < 1.0;
    announce(1, {{"cmd_calibrate reports 28 configurations", count_28},
                 {"count formula exhaustive to 3x3x7", formula_ok},
                 {"runtime < 1 s", fast}});
    CHECK(count_28);
    CHECK(formula_ok);
    CHECK(fast);
}

// ---------------------------------------------------------------------------
TEST_CASE("C2: calibration fidelity, tolerance zero", "[c2]") {
    double t0 = now_s();

    ScenarioSpec s;
    s.horizon_ms = 1000;
    s.devices = load_device_profiles(testutil::data_path("devices_default.txt"));
    s.apps = {{"md5a", "md5", {0}}, {"md5b", "md5", {1}}};
    s.interfaces = 2;
    s.schedule.add("md5a", 0, 0, 1);
    s.schedule.add("md5b", 1, 0, 1);
    SimEngine eng(table(), s);

    // the pinned example row: both hashing instances on the integrated GPU
    Configuration cfg;
    cfg.id = 0;
    cfg.mapping = {{"md5a", "UHDGraphics"}, {"md5b", "UHDGraphics"}};
    cfg.batch_size = 16384;
    ConfigStats st = eng.profile_config(cfg, 20);
    bool example_ok = st.agg_gbps == 27.6 && st.avg_latency_ms == 13.9;

    // every single-device pairing at every calibrated batch size reproduces
    // its two rows exactly
    bool sweep_ok = true;
    int checked = 0;
    std::vector<std::string> kernels = {"aes", "dpi", "md5"};
    for (const auto& dev : {"GTX1080Ti", "i7-8700K", "UHDGraphics"}) {
        for (const auto& kx : kernels) {
            for (const auto& ky : kernels) {
                for (int batch : {1024, 4096, 16384}) {
                    ScenarioSpec sp;
                    sp.horizon_ms = 1000;
                    sp.devices = s.devices;
                    sp.apps = {{"x0", kx, {0}}, {"y1", ky, {1}}};
                    sp.interfaces = 2;
                    sp.schedule.add("x0", 0, 0, 1);
                    sp.schedule.add("y1", 1, 0, 1);
                    SimEngine e2(table(), sp);
                    Configuration c2;
                    c2.id = 0;
                    c2.mapping = {{"x0", dev}, {"y1", dev}};
                    c2.batch_size = batch;
                    ConfigStats got = e2.profile_config(c2, 20);
                    const PerfRecord* rx = table().find(dev, kx, batch, 1, ky);
                    const PerfRecord* ry = table().find(dev, ky, batch, 1, kx);
                    bool ok = rx && ry && got.agg_gbps == rx->kernel_gbps + ry->kernel_gbps &&
                              got.avg_latency_ms == (rx->kernel_latency_ms + ry->kernel_latency_ms) / 2.0 &&
                              got.agg_mpps == rx->kernel_mpps + ry->kernel_mpps;
                    sweep_ok = sweep_ok && ok;
                    ++checked;
                }
            }
        }
    }

    double elapsed = now_s() - t0;
    bool fast = elapsed < 5.0;
    announce(2, {{"UHD md5+md5 @16384 -> 27.6 Gbps / 13.9 ms exactly", example_ok},
                 {"81 single-device pairings exact", sweep_ok},
                 {"runtime < 5 s", fast}});
    CHECK(example_ok);
    CHECK(sweep_ok);
    CHECK(checked == 81);
    CHECK(fast);
}

// ---------------------------------------------------------------------------
TEST_CASE("C3: data invariants on the shipped tables", "[c3]") {
    double t0 = now_s();
    CheckResult ratio = check_gbps_mpps_ratio(table());
    CheckResult solo = check_solo_consistency(table());
    CheckResult homog = check_homogeneous_aggregation(table());

    int rc = run_cli("validate --calibration " + testutil::data_path("tables_1_2_3.csv") + " --devices " +
                     testutil::data_path("devices_default.txt"));
    bool cmd_ok = rc == 0;

    double elapsed = now_s() - t0;
    for (const auto& o : homog.offenders)
        std::cout << "  homogeneous offender: " << o.key << " ratio " << fmt_double(o.value) << " (" << o.detail
                  << ")\n";
    announce(3, {{"gbps/mpps ratio in [11.5, 12.0] for every row", ratio.passed},
                 {"implied-solo spread <= 2%", solo.passed},
                 {"homogeneous aggregation within 5%", homog.passed},
                 {"cmd_validate exits clean", cmd_ok},
                 {"runtime < 1 s", elapsed < 1.0}});
    CHECK(ratio.passed);
    CHECK(solo.passed);
    // Known data defect: five i7 rows in the shipped tables miss the 5%
    // homogeneous-aggregation bound (worst 13.6%), so this sub-check and the
    // validate exit code fail honestly.  See the project notes.
    CHECK(homog.passed);
    CHECK(cmd_ok);
    CHECK(elapsed < 1.0);
}

// ---------------------------------------------------------------------------
TEST_CASE("C4: policy-change regression (throughput phase, then energy phase)", "[c4]") {
    double t0 = now_s();
    Trace tr = run_scenario("fig5d.scn");

    bool pre_ok = mean_processed(tr, 3000, 15000) >= 27.0;

    const SwitchEvent* change = nullptr;
    for (const auto& ev : tr.switches)
        if (ev.reason == SwitchReason::PolicyChange) change = &ev;
    bool switched = change != nullptr;

    // discrete GPU at off_watts within one monitor interval of the switch
    bool gtx_off = false;
    double gtx_off_watts = table().device("GTX1080Ti").off_watts;
    std::size_t gtx_col = 0;
    for (std::size_t i = 0; i < tr.device_order.size(); ++i)
        if (tr.device_order[i] == "GTX1080Ti") gtx_col = i;
    if (switched) {
        for (const auto& r : tr.rows)
            if (r.t_ms >= change->completion_ms + 1000.0 && r.t_ms <= change->completion_ms + 2000.0)
                gtx_off = r.dev_watts[gtx_col] == gtx_off_watts;
    }

    double pre_power = mean_total_power(tr, 10000, 15000);
    double post_power = mean_total_power(tr, 20000, 30000);
    bool drop_ok = pre_power - post_power >= 150.0;

    double elapsed = now_s() - t0;
    announce(4, {{"pre-switch processed >= 27 Gbps", pre_ok},
                 {"policy change switch happened", switched},
                 {"discrete GPU at off_watts within one interval", gtx_off},
                 {"total power drop >= 150 W", drop_ok},
                 {"runtime < 30 s", elapsed < 30.0}});
    CHECK(pre_ok);
    CHECK(switched);
    CHECK(gtx_off);
    CHECK(drop_ok);
    CHECK(elapsed < 30.0);
}

// ---------------------------------------------------------------------------
TEST_CASE("C5: energy policy device selection under rate steps", "[c5]") {
    Trace a = run_scenario("fig5a.scn");
    Trace b = run_scenario("fig5b.scn");

    // under min_energy at <= 10 Gbps per app, exactly one non-discrete
    // device is powered
    auto one_nondiscrete = [&](const Trace& tr, double t0, double t1) {
        for (const auto& r : tr.rows) {
            if (r.t_ms <= t0 || r.t_ms > t1) continue;
            auto on = powered_devices(tr, r);
            if (on.size() != 1) return false;
            if (table().device(on.front()).klass == DeviceClass::DiscreteGpu) return false;
        }
        return true;
    };
    bool a_low = one_nondiscrete(a, 2000, 20000);
    bool b_low = one_nondiscrete(b, 2000, 20000);

    // the 20 -> 40 Gbps step activates the discrete GPU ...
    std::size_t gtx_b = 0;
    for (std::size_t i = 0; i < b.device_order.size(); ++i)
        if (b.device_order[i] == "GTX1080Ti") gtx_b = i;
    bool gtx_activates = false;
    for (const auto& r : b.rows)
        if (r.t_ms > 21000 && r.t_ms <= 30000 && r.dev_watts[gtx_b] > 100.0) gtx_activates = true;

    // ... and deactivates within two ticks of the reversion
    ScenarioSpec sb = parse_scenario(testutil::scenario_path("fig5b.scn"));
    double deadline = 30000 + 2 * sb.monitor_interval_ms;
    bool gtx_releases = true;
    bool seen_after = false;
    for (const auto& r : b.rows)
        if (r.t_ms > deadline + sb.monitor_interval_ms) {  // rows fully after the deadline window
            seen_after = true;
            gtx_releases = gtx_releases && r.dev_watts[gtx_b] == table().device("GTX1080Ti").off_watts;
        }

    announce(5, {{"fig5a low phases: one non-discrete device", a_low},
                 {"fig5b low phases: one non-discrete device", b_low},
                 {"20->40 step activates the discrete GPU", gtx_activates},
                 {"reversion releases it within 2 ticks", gtx_releases && seen_after}});
    CHECK(a_low);
    CHECK(b_low);
    CHECK(gtx_activates);
    CHECK((gtx_releases && seen_after));
}

// ---------------------------------------------------------------------------
TEST_CASE("C6: adaptation bound and loss freedom", "[c6]") {
    bool switches_ok = true;
    bool step_lossfree = true;
    for (const char* name : {"fig5a.scn", "fig5b.scn", "fig5c.scn", "fig5d.scn", "steady.scn", "stepload.scn"}) {
        Trace tr = run_scenario(name);
        for (const auto& ev : tr.switches)
            if (ev.completion_ms - ev.t_ms > 60.0 + 1e-9) switches_ok = false;
        if (std::string(name) == "fig5b.scn" || std::string(name) == "stepload.scn")
            step_lossfree = step_lossfree && tr.summary.total_drops == 0;
    }
    announce(6, {{"every switch completes within 60 ms", switches_ok},
                 {"20->40 Gbps step incurs zero drops", step_lossfree}});
    CHECK(switches_ok);
    CHECK(step_lossfree);
}

// ---------------------------------------------------------------------------
TEST_CASE("C7: scheduler properties", "[c7]") {
    // fixed-point convergence: constant conditions, no switches after start
    Trace steady = run_scenario("steady.scn");
    bool fixed_point = steady.summary.switch_count == 0;
    bool two_ticks = true;
    if (steady.rows.size() >= 2) {
        int cfg = steady.rows[1].config_id;
        for (const auto& r : steady.rows) two_ticks = two_ticks && r.config_id == cfg;
    }

    // policy selections equal brute-force scans after 1000 random updates
    bool oracle_ok = true;
    {
        ConfigStore store;
        Rng rng(4242);
        auto mk_stats = [&](long samples) {
            ConfigStats cs;
            cs.agg_gbps = 3 + rng.unit() * 44;
            cs.agg_mpps = cs.agg_gbps / 11.73;
            cs.avg_latency_ms = 0.3 + rng.unit() * 40;
            cs.avg_power_watts = 30 + rng.unit() * 320;
            cs.samples = samples;
            cs.profiled = samples > 0;
            cs.finalize_energy();
            return cs;
        };
        for (int i = 0; i < 30; ++i) {
            Configuration c;
            c.id = i;
            c.mapping = {{"a", "d" + std::to_string(i % 3)}};
            c.batch_size = 1024 << (i % 5);
            store.upsert(c, mk_stats(20));
        }
        std::vector<PolicyId> policies = {parse_policy("max_throughput"), parse_policy("min_latency"),
                                          parse_policy("min_energy"), parse_policy("target_rate 10")};
        auto tie_break = [](const StoreEntry& x, const StoreEntry& y) {
            if (x.stats.avg_power_watts != y.stats.avg_power_watts)
                return x.stats.avg_power_watts < y.stats.avg_power_watts;
            if (x.config.batch_size != y.config.batch_size) return x.config.batch_size < y.config.batch_size;
            return x.config.id < y.config.id;
        };
        for (int step = 0; step < 1000 && oracle_ok; ++step) {
            store.update_stats(static_cast<int>(rng.below(30)), mk_stats(rng.below(12) == 0 ? 0 : 20));
            PolicyContext ctx;
            ctx.offered_gbps_per_app["a"] = rng.unit() * 45;
            double offered = ctx.offered_total();
            for (const auto& p : policies) {
                // brute-force scan with the documented tie-break
                const StoreEntry* best = nullptr;
                auto consider = [&](const StoreEntry& e, auto metric, const StoreEntry* cur) {
                    if (!cur) return true;
                    if (metric(e) != metric(*cur)) return metric(e) < metric(*cur);
                    return tie_break(e, *cur);
                };
                auto scan = [&](auto metric, bool feas) {
                    const StoreEntry* got = nullptr;
                    for (const auto& [id, e] : store) {
                        if (!e.stats.profiled) continue;
                        if (feas && e.stats.agg_gbps < offered) continue;
                        if (consider(e, metric, got)) got = &e;
                    }
                    return got;
                };
                switch (p.kind) {
                    case PolicyKind::MaxThroughput:
                        best = scan([](const StoreEntry& e) { return -e.stats.agg_gbps; }, false);
                        break;
                    case PolicyKind::MinLatency:
                        best = scan([](const StoreEntry& e) { return e.stats.avg_latency_ms; }, true);
                        if (!best) best = scan([](const StoreEntry& e) { return e.stats.avg_latency_ms; }, false);
                        break;
                    case PolicyKind::MinEnergy:
                        best = scan([](const StoreEntry& e) { return e.stats.avg_power_watts; }, true);
                        if (!best)
                            best = scan(
                                [](const StoreEntry& e) { return -(e.stats.agg_gbps / e.stats.avg_power_watts); },
                                false);
                        break;
                    case PolicyKind::TargetRate:
                        best = scan(
                            [&p](const StoreEntry& e) { return std::abs(e.stats.agg_gbps - p.target_gbps); },
                            false);
                        break;
                    default: break;
                }
                if (!best) continue;
                oracle_ok = oracle_ok && select(p, store, ctx).id == best->config.id;
            }
        }
    }

    // flow safety across every shipped scenario trace
    bool flow_safe = true;
    for (const char* name : {"fig5a.scn", "fig5b.scn", "fig5c.scn", "fig5d.scn", "steady.scn", "stepload.scn"}) {
        Trace tr = run_scenario(name);
        flow_safe = flow_safe && count_flow_safety_violations(tr.services) == 0;
    }

    announce(7, {{"fixed point within 2 ticks, no oscillation", fixed_point && two_ticks},
                 {"policy selections equal brute-force oracles (1000 updates)", oracle_ok},
                 {"zero cross-device same-flow overlaps in all traces", flow_safe}});
    CHECK(fixed_point);
    CHECK(two_ticks);
    CHECK(oracle_ok);
    CHECK(flow_safe);
}

// ---------------------------------------------------------------------------
TEST_CASE("C8: reference kernels", "[c8]") {
    using namespace refkernels;

    // RFC 1321 vectors
    auto hexstr = [](const char* s) {
        std::vector<std::uint8_t> v(s, s + std::strlen(s));
        return md5_hex(md5_digest(v));
    };
    bool md5_ok = hexstr("") == "d41d8cd98f00b204e9800998ecf8427e" &&
                  hexstr("abc") == "900150983cd24fb0d6963f7d28e17f72" &&
                  hexstr("message digest") == "f96b697d7cb7938d525a2f31aaf161d0";

    // published CBC-AES128 vector
    AesKey key;
    auto kb = from_hex("2b7e151628aed2a6abf7158809cf4f3c");
    std::copy(kb.begin(), kb.end(), key.begin());
    AesBlock iv;
    auto ivb = from_hex("000102030405060708090a0b0c0d0e0f");
    std::copy(ivb.begin(), ivb.end(), iv.begin());
    bool aes_vector_ok =
        aes128_cbc_encrypt_raw(from_hex("6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51"
                                        "30c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710"),
                               key, iv) ==
        from_hex("7649abac8119b246cee98e9b12e9197d5086cb9b507219ee95db113a917678b2"
                 "73bed6b8e3c1743b7116e69e222295163ff1caa1681fac09120eca307586e1a7");

    // roundtrip identity on 1e4 random payloads
    bool roundtrip_ok = true;
    {
        Rng rng(808);
        for (int i = 0; i < 10000 && roundtrip_ok; ++i) {
            std::vector<std::uint8_t> msg(rng.below(220));
            for (auto& c : msg) c = static_cast<std::uint8_t>(rng.below(256));
            AesKey k = derive_flow_key(rng.next(), 1);
            roundtrip_ok = aes128_cbc_decrypt(aes128_cbc_encrypt(msg, k, iv), k, iv) == msg;
        }
    }

    // Aho-Corasick vs the naive scanner on 1e4 random instances
    bool ac_ok = true;
    {
        Rng rng(117);
        for (int iter = 0; iter < 10000 && ac_ok; ++iter) {
            int alpha = 2 + static_cast<int>(rng.below(3));
            std::vector<std::vector<std::uint8_t>> pats(1 + rng.below(5));
            for (auto& p : pats) {
                p.resize(1 + rng.below(5));
                for (auto& c : p) c = static_cast<std::uint8_t>('a' + rng.below(alpha));
            }
            std::vector<std::uint8_t> text(rng.below(100));
            for (auto& c : text) c = static_cast<std::uint8_t>('a' + rng.below(alpha));

            std::set<std::vector<std::uint8_t>> uniq(pats.begin(), pats.end());
            std::uint64_t naive = 0;
            for (const auto& p : uniq)
                for (std::size_t i = 0; p.size() <= text.size() && i + p.size() <= text.size(); ++i)
                    if (std::equal(p.begin(), p.end(), text.begin() + static_cast<std::ptrdiff_t>(i))) ++naive;
            ac_ok = ac_build(pats).match_count(text) == naive;
        }
    }

    // the shipped corpus matches its seeded generator, and synthetic traffic
    // at target 0.30 lands within [27%, 33%] over 16K packets
    auto shipped = load_patterns(testutil::data_path("patterns_10k.txt"));
    bool corpus_ok = shipped == gen_patterns(kCorpusSize, kCorpusSeed) && shipped.size() == 10000;
    bool match_rate_ok = false;
    {
        DfaMatcher matcher = ac_build(shipped);
        int matched = 0;
        const int n = 16384;
        for (int i = 0; i < n; ++i) {
            auto payload = synth_payload(mix_hash(4096, i), 1460, 0.30, shipped);
            if (matcher.match_count(payload) > 0) ++matched;
        }
        double frac = static_cast<double>(matched) / n;
        match_rate_ok = frac >= 0.27 && frac <= 0.33;
    }

    announce(8, {{"md5 matches the published digests", md5_ok},
                 {"aes-128-cbc matches the published vector", aes_vector_ok},
                 {"aes roundtrip identity on 1e4 payloads", roundtrip_ok},
                 {"aho-corasick equals naive scan on 1e4 instances", ac_ok},
                 {"shipped 10k corpus is the seeded corpus", corpus_ok},
                 {"30% match target lands in [27%, 33%]", match_rate_ok}});
    CHECK(md5_ok);
    CHECK(aes_vector_ok);
    CHECK(roundtrip_ok);
    CHECK(ac_ok);
    CHECK(corpus_ok);
    CHECK(match_rate_ok);
}

// ---------------------------------------------------------------------------
TEST_CASE("C9: determinism of shipped scenarios", "[c9]") {
    bool identical = true;
    for (const char* name : {"steady.scn", "fig5b.scn"}) {
        std::string scn = testutil::scenario_path(name);
        REQUIRE(run_cli("calibrate --scenario " + scn + " --out /tmp/acc_c9_store.txt") == 0);
        REQUIRE(run_cli("simulate --scenario " + scn + " --store /tmp/acc_c9_store.txt --out /tmp/acc_c9_a") == 0);
        REQUIRE(run_cli("simulate --scenario " + scn + " --store /tmp/acc_c9_store.txt --out /tmp/acc_c9_b") == 0);
        identical = identical &&
                    testutil::slurp("/tmp/acc_c9_a/trace.csv") == testutil::slurp("/tmp/acc_c9_b/trace.csv") &&
                    testutil::slurp("/tmp/acc_c9_a/switches.csv") == testutil::slurp("/tmp/acc_c9_b/switches.csv") &&
                    testutil::slurp("/tmp/acc_c9_a/summary.txt") == testutil::slurp("/tmp/acc_c9_b/summary.txt");
    }
    announce(9, {{"same seed twice -> byte-identical trace files", identical}});
    CHECK(identical);
}

// ---------------------------------------------------------------------------
TEST_CASE("shipped pipeline: calibrate -> simulate -> validate -> report", "[c1][pipeline]") {
    double t0 = now_s();
    bool all_ok = true;
    for (const char* name : {"fig5a", "fig5b", "fig5c", "fig5d", "steady", "stepload"}) {
        std::string scn = testutil::scenario_path(std::string(name) + ".scn");
        std::string store = "/tmp/acc_pipe_store.txt";
        std::string run_dir = std::string("/tmp/acc_pipe_") + name;
        bool ok = run_cli("calibrate --scenario " + scn + " --out " + store) == 0;
        ok = ok && run_cli("simulate --scenario " + scn + " --store " + store + " --out " + run_dir) == 0;
        // data findings are report content, not runtime errors: 0 or 2
        int vrc = run_cli("validate --calibration " + testutil::data_path("tables_1_2_3.csv") + " --devices " +
                          testutil::data_path("devices_default.txt"));
        ok = ok && (vrc == 0 || vrc == 2);
        ok = ok && run_cli("report --trace " + run_dir + "/trace.csv --switches " + run_dir + "/switches.csv" +
                           " --out " + run_dir + "_report") == 0;
        if (!ok) std::cout << "  pipeline failed for " << name << "\n";
        all_ok = all_ok && ok;
    }
    double elapsed = now_s() - t0;
    std::cout << "ACCEPTANCE pipeline " << (all_ok && elapsed < 60 ? "PASS" : "FAIL") << "  (all six scenarios, "
              << fmt_double(elapsed) << " s)\n";
    CHECK(all_ok);
    CHECK(elapsed < 60.0);
}
