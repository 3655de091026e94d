#pragma once

#include <functional>
#include <random>

#include "srpc/oracle.hpp"

namespace srpc {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Action label rendering and parsing (trace files, scripted schedules)

inline std::string render_action(const NameTable& t, const MonitoredAction& a) {
    using K = MonitoredAction::Kind;
    auto name = [&](Name n) { return t.label(n); };
    switch (a.kind) {
        case K::Internal: {
            const ServiceInternal& si = a.internal;
            switch (si.kind) {
                case ServiceInternal::Kind::TauIn:
                    return "tau " + name(a.name) + " recv " + t.label(si.peer) + " " +
                           tag_str(si.tag);
                case ServiceInternal::Kind::TauOut:
                    return "tau " + name(a.name) + " send " + t.label(si.peer) + " " +
                           tag_str(si.tag);
                case ServiceInternal::Kind::Tau: return "tau " + name(a.name) + " tau";
            }
            return "?";
        }
        case K::Comm:
            return "comm " + name(a.name) + " " + name(a.to) + " " + tag_str(a.tag);
        case K::MonTauIn:
            return "mfwdin " + name(a.name) + " " + t.label(a.peer) + " " + tag_str(a.tag);
        case K::MonTauMonIn:
            return "mfwdprobe " + name(a.name) + " " + probe_str(t, a.probe);
        case K::MonTauOut:
            return "mfwdout " + name(a.name) + " " + t.label(a.peer) + " " + tag_str(a.tag);
        case K::ProbeComm:
            return "probe " + name(a.name) + " " + name(a.to) + " " + probe_str(t, a.probe);
    }
    return "?";
}

namespace detail {
inline Tag parse_tag(const std::string& s) {
    if (s == "Q") return Tag::Query;
    if (s == "R") return Tag::Response;
    if (s == "CS") return Tag::Cast;
    throw SimError("bad tag: " + s);
}
inline ClientRef parse_peer(const NameTable& t, const std::string& s) {
    if (s == "_") return ClientRef::anon();
    return t.lookup(s);
}
inline Probe parse_probe(const NameTable& t, const std::string& s) {
    auto hash = s.find('#');
    if (hash == std::string::npos) throw SimError("bad probe: " + s);
    Probe p;
    p.owner = t.lookup(s.substr(0, hash));
    p.serial = std::stoull(s.substr(hash + 1));
    return p;
}
} // namespace detail

inline MonitoredAction parse_action(const NameTable& t, const std::string& line) {
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    std::string w1, w2, w3;
    if (kind == "tau") {
        is >> w1 >> w2;
        Name n = t.lookup(w1);
        if (w2 == "tau") return MonitoredAction::internal_act(n, {ServiceInternal::Kind::Tau});
        is >> w3;
        std::string tag;
        is >> tag;
        auto k = w2 == "recv" ? ServiceInternal::Kind::TauIn : ServiceInternal::Kind::TauOut;
        return MonitoredAction::internal_act(
            n, {k, detail::parse_peer(t, w3), detail::parse_tag(tag)});
    }
    if (kind == "comm") {
        is >> w1 >> w2 >> w3;
        return MonitoredAction::comm(t.lookup(w1), t.lookup(w2), detail::parse_tag(w3));
    }
    if (kind == "mfwdin") {
        is >> w1 >> w2 >> w3;
        return MonitoredAction::mon_tau_in(t.lookup(w1), detail::parse_peer(t, w2),
                                           detail::parse_tag(w3));
    }
    if (kind == "mfwdprobe") {
        is >> w1 >> w2;
        return MonitoredAction::mon_tau_mon_in(t.lookup(w1), detail::parse_probe(t, w2));
    }
    if (kind == "mfwdout") {
        is >> w1 >> w2 >> w3;
        return MonitoredAction::mon_tau_out(t.lookup(w1), t.lookup(w2), detail::parse_tag(w3));
    }
    if (kind == "probe") {
        is >> w1 >> w2 >> w3;
        return MonitoredAction::probe_comm(t.lookup(w1), t.lookup(w2), detail::parse_probe(t, w3));
    }
    throw SimError("bad action line: " + line);
}

// Service-layer view of a monitored action, where one exists.
inline std::optional<NetworkAction> to_network_action(const MonitoredAction& a) {
    if (a.is_service_internal()) return NetworkAction::internal_act(a.name, a.internal);
    if (a.is_service_comm()) return NetworkAction::comm(a.name, a.to, a.tag);
    return std::nullopt;
}

inline MonitoredAction to_monitored_action(const NetworkAction& a) {
    if (a.kind == NetworkAction::Kind::Internal)
        return MonitoredAction::internal_act(a.name, a.internal);
    return MonitoredAction::comm(a.name, a.to, a.tag);
}

// ---------------------------------------------------------------------------
// Systems: a uniform stepping interface over the two LTS layers

struct UnmonitoredSystem {
    Network net;

    std::vector<MonitoredAction> enabled() const {
        std::vector<MonitoredAction> out;
        for (const auto& a : network_enabled(net)) out.push_back(to_monitored_action(a));
        return out;
    }
    void step(const MonitoredAction& a) {
        auto na = to_network_action(a);
        if (!na) throw SimError("monitor action on an unmonitored network");
        network_step(net, *na);
    }
    bool tick() { return false; } // no timers
    bool alarmed() const { return false; }
    std::string digest_text() const { return canonical_string(net); }
    const NameTablePtr& names() const { return net.names; }
    std::size_t components() const { return net.size(); }
};

struct MonitoredSystem {
    MonitoredNetwork net;

    std::vector<MonitoredAction> enabled() const { return monitored_network_enabled(net); }
    void step(const MonitoredAction& a) { monitored_network_step(net, a); }
    bool tick() { return tick_timers(net); }
    bool alarmed() const { return any_alarm(net); }
    std::string digest_text() const { return canonical_string(net); }
    const NameTablePtr& names() const { return net.names; }
    std::size_t components() const { return net.size(); }
};

// ---------------------------------------------------------------------------
// Scheduler policies

class Policy {
  public:
    enum class Kind { SeededRandom, FairRoundRobin, FlushPriority, Scripted };

    static Policy seeded_random(std::uint64_t seed) {
        Policy p(Kind::SeededRandom);
        p.rng_.seed(seed);
        p.id_ = "random:" + std::to_string(seed);
        return p;
    }
    static Policy fair_round_robin() {
        Policy p(Kind::FairRoundRobin);
        p.id_ = "fair";
        return p;
    }
    // prefers flushing actions; falls back to the given policy otherwise
    static Policy flush_priority(std::uint64_t fallback_seed) {
        Policy p(Kind::FlushPriority);
        p.rng_.seed(fallback_seed);
        p.id_ = "flush:" + std::to_string(fallback_seed);
        return p;
    }
    static Policy scripted(std::vector<MonitoredAction> script) {
        Policy p(Kind::Scripted);
        p.script_ = std::move(script);
        p.id_ = "script";
        return p;
    }

    const std::string& id() const { return id_; }
    Kind kind() const { return kind_; }
    bool script_done() const { return kind_ == Kind::Scripted && cursor_ >= script_.size(); }

    // Chooses an index into `enabled` (nonempty). Returns npos for script end.
    std::size_t pick(const std::vector<MonitoredAction>& enabled, std::size_t components) {
        switch (kind_) {
            case Kind::SeededRandom: return rng_() % enabled.size();
            case Kind::FlushPriority:
                for (std::size_t i = 0; i < enabled.size(); ++i)
                    if (enabled[i].is_flushing()) return i;
                return rng_() % enabled.size();
            case Kind::FairRoundRobin: {
                for (std::size_t off = 0; off < components; ++off) {
                    std::uint32_t c =
                        static_cast<std::uint32_t>((cursor_ + off) % components);
                    for (std::size_t i = 0; i < enabled.size(); ++i) {
                        if (enabled[i].name.index() == c) {
                            cursor_ = c + 1;
                            return i;
                        }
                    }
                }
                return 0;
            }
            case Kind::Scripted: {
                if (cursor_ >= script_.size()) return npos;
                for (std::size_t i = 0; i < enabled.size(); ++i) {
                    if (enabled[i] == script_[cursor_]) {
                        ++cursor_;
                        return i;
                    }
                }
                throw SimError("scripted action not enabled at step " + std::to_string(cursor_));
            }
        }
        return 0;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  private:
    explicit Policy(Kind k) : kind_(k) {}
    Kind kind_;
    std::string id_;
    std::mt19937_64 rng_;
    std::vector<MonitoredAction> script_;
    std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Runs and traces

enum class StopReason { Quiescent, StepLimit, Alarm, ScriptEnd, Violation };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::Quiescent: return "quiescent";
        case StopReason::StepLimit: return "step-limit";
        case StopReason::Alarm: return "alarm";
        case StopReason::ScriptEnd: return "script-end";
        case StopReason::Violation: return "violation";
    }
    return "?";
}

struct AlarmReport {
    Name monitor{};
    Probe probe;
    long step = 0;
};

struct TraceStep {
    MonitoredAction action;
    bool tick = false; // silent timer round instead of an LTS action
};

struct Trace {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string policy;
    std::uint64_t initial_digest = 0;
    std::uint64_t final_digest = 0;
    std::vector<TraceStep> steps;
};

struct RunResult {
    StopReason reason = StopReason::Quiescent;
    long steps = 0;
    std::optional<AlarmReport> alarm;
    std::string diagnostic;
    Trace trace;
};

// Invariant hook: runs after each step; a nonempty result aborts the run.
using StepHook = std::function<std::string(long)>;

template <class System>
RunResult run(System& sys, Policy policy, long max_steps, const StepHook& hook = {},
              bool stop_on_alarm = true) {
    RunResult res;
    res.trace.policy = policy.id();
    res.trace.initial_digest = fnv1a(sys.digest_text());
    bool was_alarmed = sys.alarmed();
    for (long step = 0; step < max_steps; ++step) {
        auto enabled = sys.enabled();
        if (enabled.empty()) {
            if (sys.tick()) {
                res.trace.steps.push_back({MonitoredAction{}, true});
                ++res.steps;
                continue;
            }
            res.reason = StopReason::Quiescent;
            res.trace.final_digest = fnv1a(sys.digest_text());
            return res;
        }
        std::size_t ix;
        try {
            ix = policy.pick(enabled, sys.components());
        } catch (const SimError& e) {
            res.reason = StopReason::Violation;
            res.diagnostic = e.what();
            res.trace.final_digest = fnv1a(sys.digest_text());
            return res;
        }
        if (ix == Policy::npos) {
            res.reason = StopReason::ScriptEnd;
            res.trace.final_digest = fnv1a(sys.digest_text());
            return res;
        }
        try {
            sys.step(enabled[ix]);
        } catch (const SrpcViolation& e) {
            res.reason = StopReason::Violation;
            res.diagnostic = e.what();
            res.trace.final_digest = fnv1a(sys.digest_text());
            return res;
        }
        sys.tick();
        res.trace.steps.push_back({enabled[ix], false});
        ++res.steps;
        if (!was_alarmed && sys.alarmed()) {
            was_alarmed = true;
            if constexpr (std::is_same_v<System, MonitoredSystem>) {
                for (std::uint32_t i = 0; i < sys.net.size(); ++i) {
                    const auto& ms = sys.net.services[i];
                    if (ms.mstate.alarm && ms.mstate.alarm_probe) {
                        res.alarm = AlarmReport{Name(i), *ms.mstate.alarm_probe, res.steps - 1};
                        break;
                    }
                }
            }
            if (stop_on_alarm) {
                res.reason = StopReason::Alarm;
                res.trace.final_digest = fnv1a(sys.digest_text());
                return res;
            }
        }
        if (hook) {
            std::string msg = hook(res.steps - 1);
            if (!msg.empty()) {
                res.reason = StopReason::Violation;
                res.diagnostic = msg;
                res.trace.final_digest = fnv1a(sys.digest_text());
                return res;
            }
        }
    }
    res.reason = StopReason::StepLimit;
    res.trace.final_digest = fnv1a(sys.digest_text());
    return res;
}

// Replays a recorded trace on a fresh system, validating every step and the
// final digest.
template <class System>
bool replay(System sys, const Trace& trace) {
    if (fnv1a(sys.digest_text()) != trace.initial_digest) return false;
    for (const auto& st : trace.steps) {
        if (st.tick) {
            sys.tick();
            continue;
        }
        sys.step(st.action);
        sys.tick();
    }
    return fnv1a(sys.digest_text()) == trace.final_digest;
}

// ---------------------------------------------------------------------------
// Trace files: `# scenario=<name> seed=<u64> policy=<id>` then one action per
// line, `<index> <label>`. Bit-exact for replay.

inline std::string trace_to_text(const NameTable& t, const Trace& tr) {
    std::ostringstream os;
    os << "# scenario=" << tr.scenario << " seed=" << tr.seed << " policy=" << tr.policy << '\n';
    for (std::size_t i = 0; i < tr.steps.size(); ++i) {
        os << i << ' ';
        if (tr.steps[i].tick) os << "tick";
        else os << render_action(t, tr.steps[i].action);
        os << '\n';
    }
    return os.str();
}

inline std::vector<TraceStep> trace_steps_from_text(const NameTable& t, const std::string& text) {
    std::vector<TraceStep> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long index;
        ls >> index;
        std::string rest;
        std::getline(ls, rest);
        if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
        if (rest == "tick") out.push_back({MonitoredAction{}, true});
        else out.push_back({parse_action(t, rest), false});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Flushing execution

inline bool instrumentation_shaped(const MonitoredNetwork& mn) {
    for (const auto& ms : mn.services)
        for (const auto& item : ms.mqueue)
            if (!item.is_probe()) return false;
    return true;
}

namespace detail {
// Fair rotation over components restricted to flushing actions. Fairness
// matters here: a circulating stale probe can generate flushing actions
// forever at one component, which must not starve the others.
struct FlushRotation {
    std::uint32_t cursor = 0;

    std::optional<MonitoredAction> next(const MonitoredNetwork& mn) {
        auto enabled = monitored_network_enabled(mn);
        std::size_t n = mn.size();
        for (std::size_t off = 0; off < n; ++off) {
            std::uint32_t c = static_cast<std::uint32_t>((cursor + off) % n);
            for (const auto& a : enabled) {
                if (a.name.index() == c && a.is_flushing()) {
                    cursor = c + 1;
                    return a;
                }
            }
        }
        return std::nullopt;
    }
};
} // namespace detail

struct FlushResult {
    bool ok = false; // false = bound exceeded
    std::vector<MonitoredAction> path;
};

// Runs only monitor-flushing actions until every monitor queue is empty or
// probe-only, i.e. the state is an instrumentation image again.
inline FlushResult flush(MonitoredNetwork& mn, long bound) {
    FlushResult res;
    detail::FlushRotation rot;
    for (long i = 0; i < bound; ++i) {
        if (instrumentation_shaped(mn)) {
            res.ok = true;
            return res;
        }
        auto a = rot.next(mn);
        if (!a) {
            if (tick_timers(mn)) continue;
            res.ok = instrumentation_shaped(mn);
            return res;
        }
        monitored_network_step(mn, *a);
        res.path.push_back(*a);
    }
    res.ok = instrumentation_shaped(mn);
    return res;
}

// Monitor-flushing run until the first alarm. Returns the step count at the
// alarm, or nothing when the flush quiesces or the bound runs out.
inline std::optional<long> flush_to_alarm(MonitoredNetwork& mn, long bound,
                                          std::vector<MonitoredAction>* path_out = nullptr) {
    detail::FlushRotation rot;
    for (long i = 0; i < bound; ++i) {
        if (any_alarm(mn)) return i;
        auto a = rot.next(mn);
        if (!a) {
            if (tick_timers(mn)) continue;
            return std::nullopt;
        }
        monitored_network_step(mn, *a);
        if (path_out) path_out->push_back(*a);
    }
    return any_alarm(mn) ? std::optional<long>(bound) : std::nullopt;
}

// ---------------------------------------------------------------------------
// Progress measure toward the inevitable alarm of a deadlocked network:
// (hops the alarming probe still makes, flushing steps before the next hop),
// compared lexicographically. Non-increasing along any run of a deadlocked
// monitored network.

using Measure = std::pair<long, long>;

namespace detail {

// Counts the local flushing actions of one monitor until the tracked queue
// item performs its own hop: an outgoing probe's send, an incoming probe's
// forward toward `chain_next`, or a queued query's probe emission. For a
// tracked incoming probe at its owner, counts the actions before it is
// processed (the processing itself raises the alarm).
struct LocalItem {
    MonitorQueueItem item;
    bool tracked;
};

inline std::optional<long> local_steps(const MonitoredService& ms, Name self,
                                       std::size_t tracked_index, std::optional<Name> chain_next) {
    std::deque<LocalItem> q;
    for (std::size_t i = 0; i < ms.mqueue.size(); ++i)
        q.push_back({ms.mqueue[i], i == tracked_index});
    MonitorState st = ms.mstate;
    st.probe_delay = 0; // measure is defined for eager emission
    st.timer.reset();
    long count = 0;
    long guard = 0;
    while (!q.empty()) {
        if (guard++ > 100000) return std::nullopt;
        LocalItem li = std::move(q.front());
        q.pop_front();
        switch (li.item.kind) {
            case MonitorQueueItem::Kind::OutProbe:
                if (li.tracked) return count; // its hop is the next action
                ++count;
                break;
            case MonitorQueueItem::Kind::OutMsg: ++count; break;
            case MonitorQueueItem::Kind::InMsg:
            case MonitorQueueItem::Kind::InProbe: {
                if (li.tracked && !chain_next) return count; // alarm on processing
                auto emitted = handle(st, li.item, self);
                ++count;
                for (auto it = emitted.rbegin(); it != emitted.rend(); ++it) {
                    bool trk = li.tracked && chain_next &&
                               it->peer == ClientRef(*chain_next);
                    q.push_front({std::move(*it), trk});
                }
                break;
            }
        }
    }
    return std::nullopt; // the tracked item never performed its hop
}

struct Cycle {
    std::vector<Name> forward; // forward[0] = owner, forward[i+1] = lock target
    std::size_t length() const { return forward.size(); }
    // backward chain node at distance j from the owner (j = 0 is the owner)
    Name backward(std::size_t j) const { return forward[(length() - j % length()) % length()]; }
};

inline std::optional<Cycle> cycle_of(const WaitForGraph& g, Name owner) {
    Cycle c;
    Name cur = owner;
    for (std::size_t i = 0; i <= g.size(); ++i) {
        c.forward.push_back(cur);
        auto next = g.target(cur);
        if (!next) return std::nullopt;
        if (*next == owner) return c;
        cur = *next;
    }
    return std::nullopt;
}

// The probe can be propagated at V only when V's monitor already waits on the
// backward neighbour or still has its query queued.
inline bool backward_ready(const MonitoredService& ms, Name pred) {
    if (std::binary_search(ms.mstate.waiting.begin(), ms.mstate.waiting.end(), pred)) return true;
    for (const auto& item : ms.mqueue)
        if (item.is_in_msg() && item.tag == Tag::Query && item.peer == ClientRef(pred))
            return true;
    return false;
}

} // namespace detail

inline std::optional<Measure> progress_measure(const MonitoredNetwork& mn) {
    Network d = deinstrument(mn);
    WaitForGraph g = locked_map(d);
    auto dl = deadlocked_set(d);
    bool applicable = false;
    for (Name n : dl)
        if (mn.at(n).mstate.probe) applicable = true;
    if (!applicable) return std::nullopt;
    if (any_alarm(mn)) return Measure{0, 0};

    std::optional<Measure> best;
    auto consider = [&best](std::optional<long> k, std::optional<long> m) {
        if (!k || !m) return;
        Measure c{*k, *m};
        if (!best || c < *best) best = c;
    };

    for (Name owner : dl) {
        const auto& probe = mn.at(owner).mstate.probe;
        if (!probe) continue;
        auto cyc = detail::cycle_of(g, owner);
        if (!cyc) continue; // off-cycle owners never receive their probe back
        const std::size_t L = cyc->length();

        // conditions at the propagation nodes still ahead of distance j
        auto future_ready = [&](std::size_t j) {
            for (std::size_t i = j + 1; i < L; ++i) {
                Name v = cyc->backward(i);
                if (!detail::backward_ready(mn.at(v), cyc->backward(i + 1))) return false;
            }
            return true;
        };

        for (std::size_t j = 0; j < L; ++j) {
            Name y = cyc->backward(j);
            Name pred = cyc->backward(j + 1);
            const MonitoredService& ms = mn.at(y);
            bool seen_pred_query = std::binary_search(ms.mstate.waiting.begin(),
                                                      ms.mstate.waiting.end(), pred);
            for (std::size_t idx = 0; idx < ms.mqueue.size(); ++idx) {
                const auto& item = ms.mqueue[idx];
                if (item.is_in_msg() && item.tag == Tag::Query && item.peer == ClientRef(pred))
                    seen_pred_query = true;
                if (item.kind == MonitorQueueItem::Kind::InProbe && item.probe == *probe) {
                    if (j == 0) {
                        consider(0, detail::local_steps(ms, y, idx, std::nullopt));
                    } else if (seen_pred_query && future_ready(j)) {
                        consider(static_cast<long>(L - j),
                                 detail::local_steps(ms, y, idx, pred));
                    }
                }
                if (item.kind == MonitorQueueItem::Kind::OutProbe && item.probe == *probe &&
                    item.peer == ClientRef(pred) && future_ready(j)) {
                    consider(static_cast<long>(L - j), detail::local_steps(ms, y, idx, pred));
                }
            }
        }

        // latent chain: the owner's own probe leaves once the backward
        // neighbour's query is processed
        {
            const MonitoredService& ms = mn.at(owner);
            Name pred = cyc->backward(1);
            for (std::size_t idx = 0; idx < ms.mqueue.size(); ++idx) {
                const auto& item = ms.mqueue[idx];
                if (item.is_in_msg() && item.tag == Tag::Query && item.peer == ClientRef(pred) &&
                    future_ready(0))
                    consider(static_cast<long>(L), detail::local_steps(ms, owner, idx, pred));
            }
        }
    }
    return best;
}

} // namespace srpc
