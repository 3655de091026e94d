#pragma once

#include <atomic>
#include <iomanip>
#include <thread>

#include "srpc/scenario.hpp"
#include "srpc/sim.hpp"

namespace srpc {

// ---------------------------------------------------------------------------
// Random scenario generation. One potential wait-for ring (its size governed
// by cycle_density) plus strictly layered filler traffic that can never
// deadlock. With cycle_density = 0 every schedule is deadlock-free.

struct GenParams {
    int n_services = 16;
    double cycle_density = 0.5;
    int max_call_depth = 2;
    std::uint64_t seed = 0;
};

inline Scenario generate(const GenParams& params) {
    if (params.n_services < 2) throw std::invalid_argument("need at least two services");
    std::mt19937_64 rng(params.seed ^ 0x5eed5eed5eedull);
    auto table = std::make_shared<NameTable>();
    Scenario scn;
    scn.name = "gen-" + std::to_string(params.n_services) + "-" + std::to_string(params.seed);

    const int k = params.n_services / 2;       // endpoint count
    const int n_proxies = params.n_services - k;
    for (int i = 0; i < k; ++i) table->intern("e" + std::to_string(i));
    for (int j = 0; j < n_proxies; ++j) table->intern("p" + std::to_string(j));
    scn.declared = static_cast<std::uint32_t>(params.n_services);
    table->intern("_init");
    auto endpoint = [](int i) { return Name(static_cast<std::uint32_t>(i)); };
    auto proxy = [&](int j) { return Name(static_cast<std::uint32_t>(k + j)); };

    scn.roles.assign(static_cast<std::size_t>(params.n_services), Role::endpoint());

    // ring of proxied calls e_i -> p_i -> e_(i+1): a deadlock happens exactly
    // when every ring session is in flight at once. Whether the ring closes at
    // all is a per-seed draw scaled by cycle_density; the remaining
    // nondeterminism is scheduling.
    int ring = 0;
    if (params.cycle_density > 0 && k >= 2 && n_proxies >= 2) {
        ring = std::min(std::min(k, n_proxies),
                        std::max(2, static_cast<int>(std::lround(3 * 2 * params.cycle_density))));
    }
    bool closes = ring > 0 && std::uniform_real_distribution<double>(0, 1)(rng) <
                                  0.35 * std::min(1.0, params.cycle_density / 0.5);
    for (int i = 0; i < ring; ++i)
        scn.roles[proxy(i).index()] = Role::proxy(endpoint((i + 1) % ring));
    for (int i = 0; i < ring; ++i) {
        bool last = i == ring - 1;
        Program prog = last && !closes ? Program{Instruction::delay(2)}
                                       : Program{Instruction::call(proxy(i), {})};
        scn.sessions.push_back({"ring" + std::to_string(i), endpoint(i), std::move(prog)});
    }

    // filler proxies forward to strictly higher endpoints; filler sessions
    // call only upward, so their wait-for edges cannot close a cycle
    for (int j = ring; j < n_proxies; ++j) {
        int hi = ring + 1 + static_cast<int>(rng() % std::max(1, k - ring - 1));
        if (hi >= k) hi = k - 1;
        if (hi <= ring) hi = std::min(k - 1, ring + 1);
        scn.roles[proxy(j).index()] = Role::proxy(endpoint(hi));
    }
    std::function<Program(int, int)> filler_program = [&](int caller, int depth) {
        Program prog;
        if (rng() % 2) prog.push_back(Instruction::delay(static_cast<int>(rng() % 3)));
        // candidate proxies whose target lies strictly above the caller
        std::vector<int> ok;
        for (int j = ring; j < n_proxies; ++j) {
            int t = static_cast<int>(scn.roles[proxy(j).index()].proxy_target.index());
            if (t > caller) ok.push_back(j);
        }
        if (!ok.empty() && depth > 0) {
            int j = ok[rng() % ok.size()];
            int t = static_cast<int>(scn.roles[proxy(j).index()].proxy_target.index());
            prog.push_back(Instruction::call(proxy(j), filler_program(t, depth - 1)));
        }
        return prog;
    };
    for (int m = ring; m < k; ++m)
        scn.sessions.push_back({"w" + std::to_string(m), endpoint(m),
                                filler_program(m, params.max_call_depth)});
    if (scn.sessions.empty())
        scn.sessions.push_back({"w0", endpoint(0), {Instruction::delay(1)}});

    scn.names = table;
    return scn;
}

// ---------------------------------------------------------------------------
// Metrics: message counts per the monitored-forwarding accounting, where each
// service message costs one sender-side and one receiver-side forwarding hop
// on top of the network send.

struct WindowCounts {
    long service_msgs = 0;
    long probe_msgs = 0;
    long total_msgs = 0;
};

struct Metrics {
    long service_msgs = 0;
    long probe_msgs = 0;
    long total_msgs = 0;
    bool deadlock_detected = false;
    std::optional<long> detection_step;
    std::vector<WindowCounts> windows;
};

inline void count_action(Metrics& m, const MonitoredAction& a, long window_size, long step) {
    long add_service = a.is_service_comm() ? 1 : 0;
    long add_probe = a.is_probe_comm() ? 1 : 0;
    long add_total = add_service + add_probe;
    if (a.kind == MonitoredAction::Kind::MonTauIn || a.kind == MonitoredAction::Kind::MonTauOut)
        add_total += 1;
    m.service_msgs += add_service;
    m.probe_msgs += add_probe;
    m.total_msgs += add_total;
    if (window_size > 0) {
        auto w = static_cast<std::size_t>(step / window_size);
        if (m.windows.size() <= w) m.windows.resize(w + 1);
        m.windows[w].service_msgs += add_service;
        m.windows[w].probe_msgs += add_probe;
        m.windows[w].total_msgs += add_total;
    }
}

inline Metrics metrics_of(const Trace& trace, long window_size = 0) {
    Metrics m;
    long step = 0;
    for (const auto& st : trace.steps) {
        if (!st.tick) count_action(m, st.action, window_size, step);
        ++step;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Benchmark campaigns. Each run is a pair: an unmonitored baseline and its
// monitored twin executing the same service schedule (the baseline trace
// lifted action by action), so service message counts match exactly and the
// monitoring overhead is isolated.

struct BenchConfig {
    std::vector<int> sizes;
    int runs_per_size = 20;
    bool delayed = false;
    int probe_delay = 0; // used when delayed
    std::uint64_t seed_base = 1;
    long max_steps = 200000;
    int threads = 0; // 0: hardware concurrency
};

struct BenchRow {
    std::string run_id;
    int n_services = 0;
    std::string strategy;
    int delay = 0;
    Metrics metrics;
    bool deadlocked = false;
    std::string stop_reason;
};

inline std::string csv_header() {
    return "run_id,n_services,strategy,delay,service_msgs,probe_msgs,total_msgs,deadlocked,"
           "detection_step,stop_reason";
}

inline std::string to_csv(const BenchRow& r) {
    std::ostringstream os;
    os << r.run_id << ',' << r.n_services << ',' << r.strategy << ',' << r.delay << ','
       << r.metrics.service_msgs << ',' << r.metrics.probe_msgs << ',' << r.metrics.total_msgs
       << ',' << (r.deadlocked ? 1 : 0) << ',';
    if (r.metrics.detection_step) os << *r.metrics.detection_step;
    os << ',' << r.stop_reason;
    return os.str();
}

struct BenchPair {
    BenchRow baseline;
    BenchRow monitored;
};

inline BenchPair bench_run(int n_services, int run_ix, const BenchConfig& cfg) {
    GenParams gp;
    gp.n_services = n_services;
    gp.seed = cfg.seed_base + static_cast<std::uint64_t>(n_services) * 10007 +
              static_cast<std::uint64_t>(run_ix);
    Scenario scn = generate(gp);
    std::uint64_t run_seed = gp.seed ^ 0x9e3779b97f4a7c15ull;

    BenchPair out;
    UnmonitoredSystem sys{build_network(scn)};
    auto res = run(sys, Policy::seeded_random(run_seed), cfg.max_steps);
    bool deadlocked = !deadlocked_set(sys.net).empty();

    out.baseline.run_id = std::to_string(n_services) + "/" + std::to_string(run_ix) + "/base";
    out.baseline.n_services = n_services;
    out.baseline.strategy = "none";
    out.baseline.metrics = metrics_of(res.trace);
    out.baseline.deadlocked = deadlocked;
    out.baseline.stop_reason = to_string(res.reason);

    // monitored twin: lift the same schedule, then let the monitors settle
    int delay = cfg.delayed ? cfg.probe_delay : 0;
    MonitoredNetwork mn = instrument(build_network(scn), delay);
    Metrics m;
    long step = 0;
    std::optional<long> detection;
    for (const auto& st : res.trace.steps) {
        auto na = to_network_action(st.action);
        for (const auto& a : lift_action(mn, *na)) {
            count_action(m, a, 0, step);
            ++step;
            if (!detection && any_alarm(mn)) detection = step - 1;
        }
        tick_timers(mn);
    }
    std::vector<MonitoredAction> tail;
    auto alarm_at = flush_to_alarm(mn, cfg.max_steps, &tail);
    for (const auto& a : tail) {
        count_action(m, a, 0, step);
        ++step;
    }
    if (!detection && alarm_at) detection = step;
    m.deadlock_detected = any_alarm(mn);
    m.detection_step = detection;

    out.monitored.run_id = std::to_string(n_services) + "/" + std::to_string(run_ix) + "/mon";
    out.monitored.n_services = n_services;
    out.monitored.strategy = cfg.delayed ? "delayed" : "eager";
    out.monitored.delay = delay;
    out.monitored.metrics = m;
    out.monitored.deadlocked = deadlocked;
    out.monitored.stop_reason = any_alarm(mn) ? "alarm" : to_string(res.reason);
    return out;
}

// Runs the campaign across worker threads; rows come back in run order.
inline std::vector<BenchPair> bench(const BenchConfig& cfg) {
    std::vector<std::pair<int, int>> jobs;
    for (int size : cfg.sizes)
        for (int r = 0; r < cfg.runs_per_size; ++r) jobs.emplace_back(size, r);
    std::vector<BenchPair> results(jobs.size());
    unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                       : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(jobs.size()));
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            results[i] = bench_run(jobs[i].first, jobs[i].second, cfg);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    return results;
}

// ---------------------------------------------------------------------------
// Columnar trace rendering: one column per declared service, events from top
// to bottom, closing with the deadlocked set carried by the alarming probe.

inline std::string render_trace(const Scenario& scn, const Trace& trace, bool monitored,
                                int probe_delay = 0) {
    const NameTable& t = *scn.names;
    const std::size_t cols = scn.declared;
    const int width = 16;
    std::ostringstream os;
    for (std::size_t c = 0; c < cols; ++c)
        os << std::left << std::setw(width) << t.label(Name(static_cast<std::uint32_t>(c)));
    os << '\n';
    auto emit = [&](Name who, const std::string& text) {
        if (who.index() >= cols) return; // the initiator has no column
        std::string line(width * cols, ' ');
        std::string cell = text.substr(0, static_cast<std::size_t>(width - 1));
        line.replace(who.index() * width, cell.size(), cell);
        os << line << '\n';
    };

    // replay to recover payload session labels and lock transitions
    MonitoredSystem msys{instrument(build_network(scn), probe_delay)};
    UnmonitoredSystem usys{build_network(scn)};
    std::optional<AlarmReport> alarm;
    long step = 0;
    for (const auto& st : trace.steps) {
        ++step;
        if (st.tick) {
            if (monitored) msys.tick();
            continue;
        }
        const MonitoredAction& a = st.action;
        switch (a.kind) {
            case MonitoredAction::Kind::Comm: {
                std::string sess;
                if (monitored) {
                    const auto& q = msys.net.at(a.name).mqueue;
                    if (!q.empty() && q.front().payload) sess = q.front().payload->session;
                } else {
                    for (const auto& msg : usys.net.at(a.name).output)
                        if (msg.peer == ClientRef(a.to) && msg.tag == a.tag) {
                            if (msg.payload) sess = msg.payload->session;
                            break;
                        }
                }
                std::string ann = sess.empty() ? "" : "[" + sess + "]";
                emit(a.name, "! " + tag_str(a.tag) + "(" + t.label(a.to) + ")" + ann);
                emit(a.to, "? " + tag_str(a.tag) + "(" + t.label(a.name) + ")" + ann);
                break;
            }
            case MonitoredAction::Kind::Internal:
                if (a.internal.kind == ServiceInternal::Kind::TauOut &&
                    a.internal.tag == Tag::Query)
                    emit(a.name, "=> LOCK(" + t.label(a.internal.peer) + ")");
                break;
            case MonitoredAction::Kind::ProbeComm:
                emit(a.name, "! P" + probe_str(t, a.probe) + " -> " + t.label(a.to));
                break;
            case MonitoredAction::Kind::MonTauMonIn: {
                bool own = false;
                const auto& held = msys.net.at(a.name).mstate.probe;
                own = held && *held == a.probe;
                if (own) emit(a.name, "? P" + probe_str(t, a.probe) + " !! DEADLOCK");
                break;
            }
            default: break;
        }
        if (monitored) {
            msys.step(a);
            msys.tick();
            if (!alarm && msys.alarmed()) {
                for (std::uint32_t i = 0; i < msys.net.size(); ++i) {
                    const auto& ms = msys.net.services[i];
                    if (ms.mstate.alarm && ms.mstate.alarm_probe)
                        alarm = AlarmReport{Name(i), *ms.mstate.alarm_probe, step - 1};
                }
            }
        } else {
            usys.step(a);
        }
    }
    if (alarm) {
        std::vector<Name> set = alarm->probe.trail;
        set.push_back(alarm->probe.owner);
        std::sort(set.begin(), set.end());
        set.erase(std::unique(set.begin(), set.end()), set.end());
        os << "deadlocked:";
        for (Name n : set) os << ' ' << t.label(n);
        os << '\n';
    }
    return os.str();
}

} // namespace srpc
