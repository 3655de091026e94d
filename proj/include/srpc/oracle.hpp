#pragma once

#include <optional>

#include "srpc/monitor.hpp"

namespace srpc {

// Functional wait-for graph: each locked service points at the unique name it
// is locked on.
struct WaitForGraph {
    std::vector<std::optional<Name>> edge; // indexed by name

    std::optional<Name> target(Name n) const { return edge[n.index()]; }
    std::size_t size() const { return edge.size(); }
};

inline WaitForGraph locked_map(const Network& n) {
    WaitForGraph g;
    g.edge.resize(n.size());
    for (std::uint32_t i = 0; i < n.size(); ++i) {
        const Service& s = n.services[i];
        AbstractSrpcState st = s.srpc();
        if (st.is_locked() && is_locked_on(s, st.server)) g.edge[i] = st.server;
    }
    return g;
}

// Forward walk: true iff `from` reaches `to` in one or more steps.
inline bool transitively_locked_on(const WaitForGraph& g, Name from, Name to) {
    std::vector<bool> seen(g.size(), false);
    Name cur = from;
    while (true) {
        auto next = g.target(cur);
        if (!next) return false;
        if (*next == to) return true;
        if (seen[next->index()]) return false;
        seen[next->index()] = true;
        cur = *next;
    }
}

// The maximal deadlocked set: every name whose forward walk in the wait-for
// graph reaches a cycle. Empty iff the network has no deadlock.
inline std::vector<Name> deadlocked_set(const Network& n) {
    WaitForGraph g = locked_map(n);
    // colour 0 unknown, 1 in progress, 2 deadlocked, 3 clear
    std::vector<std::uint8_t> colour(g.size(), 0);
    for (std::uint32_t i = 0; i < g.size(); ++i) {
        if (colour[i]) continue;
        std::vector<std::uint32_t> path;
        std::uint32_t cur = i;
        while (true) {
            if (colour[cur] == 1) {
                // found a new cycle: everything on the current path from the
                // cycle entry onwards deadlocks, the prefix reaches it too
                for (auto ix : path) colour[ix] = 2;
                break;
            }
            if (colour[cur] == 2 || colour[cur] == 3) {
                for (auto ix : path) colour[ix] = colour[cur];
                break;
            }
            colour[cur] = 1;
            path.push_back(cur);
            auto next = g.target(Name(cur));
            if (!next) {
                for (auto ix : path) colour[ix] = 3;
                break;
            }
            cur = next->index();
        }
    }
    std::vector<Name> out;
    for (std::uint32_t i = 0; i < g.size(); ++i)
        if (colour[i] == 2) out.push_back(Name(i));
    return out;
}

struct InvariantViolationEntry {
    std::string rule;
    std::string detail;
};

struct InvariantReport {
    bool ok = true;
    std::vector<InvariantViolationEntry> violations;

    void flag(std::string rule, std::string detail) {
        ok = false;
        violations.push_back({std::move(rule), std::move(detail)});
    }
    std::string summary() const {
        std::string s;
        for (const auto& v : violations) s += v.rule + ": " + v.detail + "\n";
        return s;
    }
};

// Initial-network validation (deployment precondition for instrumentation).
inline InvariantReport check_initial(const Network& n) {
    InvariantReport r;
    for (const auto& msg : initial_violations(n)) r.flag("initial", msg);
    return r;
}

// Client relation: `c` has a query being handled by `s`, queued at `s`, or
// already answered in `s`'s output.
inline bool is_client_of(Name c, const Service& s) {
    if (s.input.has(ClientRef(c), Tag::Query)) return true;
    AbstractSrpcState st = s.srpc();
    if ((st.is_working() || st.is_locked()) && st.client == ClientRef(c)) return true;
    return s.output.has(ClientRef(c), Tag::Response);
}

namespace detail {

inline std::size_t count_if_queue(const SelectiveQueue& q, auto pred) {
    std::size_t n = 0;
    for (const auto& m : q)
        if (pred(m)) ++n;
    return n;
}

inline void check_wf_service(const Network& net, Name name, InvariantReport& r) {
    const Service& s = net.at(name);
    const std::string who = net.names->label(name);
    AbstractSrpcState st = s.srpc();

    // client clauses
    std::size_t responses =
        count_if_queue(s.input, [](const QueueMessage& m) { return m.tag == Tag::Response; });
    if (responses > 1) r.flag("client-1", who + ": more than one response queued");
    for (const auto& m : s.input) {
        if (m.tag != Tag::Response) continue;
        if (!(st.is_locked() && ClientRef(st.server) == m.peer))
            r.flag("client-2", who + ": response without a matching lock");
    }
    for (const auto& m : s.output) {
        if (m.tag != Tag::Query) continue;
        if (!(st.is_locked() && ClientRef(st.server) == m.peer))
            r.flag("client-3", who + ": outgoing query without a matching lock");
    }
    bool seen_query = false;
    for (const auto& m : s.output) {
        if (seen_query) {
            r.flag("client-4", who + ": outgoing query is not the last output element");
            break;
        }
        if (m.tag == Tag::Query) seen_query = true;
    }
    bool query_out = seen_query;
    if (responses > 0 && query_out) {
        r.flag("client-5", who + ": queued response alongside outgoing query");
        r.flag("client-6", who + ": outgoing query alongside queued response");
    }
    if (st.is_locked()) {
        bool ok = s.output.empty() || s.output.has(ClientRef(st.server), Tag::Query);
        if (!ok) r.flag("client-7", who + ": locked with unrelated pending output");
    }

    // server clauses
    for (std::uint32_t c = 0; c < net.size(); ++c) {
        ClientRef peer{Name(c)};
        std::size_t queries = count_if_queue(
            s.input, [&](const QueueMessage& m) { return m.tag == Tag::Query && m.peer == peer; });
        if (queries > 1)
            r.flag("server-1", who + ": duplicate query from " + net.names->label(Name(c)));
        std::size_t out_responses = count_if_queue(s.output, [&](const QueueMessage& m) {
            return m.tag == Tag::Response && m.peer == peer;
        });
        if (out_responses > 1)
            r.flag("server-2", who + ": duplicate response to " + net.names->label(Name(c)));
        int facts = (queries > 0 ? 1 : 0) + (out_responses > 0 ? 1 : 0);
        if (st.is_working() && st.client == peer) ++facts;
        if (st.is_locked() && st.client == peer) ++facts;
        if (facts > 1)
            r.flag("server-3", who + ": client " + net.names->label(Name(c)) +
                                   " appears in more than one serving stage");
    }
}

} // namespace detail

// Well-formedness of the (de-instrumented) network: the per-service client
// and server clauses plus the client/locked biconditional.
inline InvariantReport check_wf(const Network& n) {
    InvariantReport r;
    WaitForGraph g = locked_map(n);
    for (std::uint32_t i = 0; i < n.size(); ++i) detail::check_wf_service(n, Name(i), r);
    for (std::uint32_t c = 0; c < n.size(); ++c) {
        for (std::uint32_t srv = 0; srv < n.size(); ++srv) {
            bool client = is_client_of(Name(c), n.at(Name(srv)));
            bool locked = g.target(Name(c)) && *g.target(Name(c)) == Name(srv);
            if (client != locked)
                r.flag("net-2", n.names->label(Name(c)) + (client ? " is a client of "
                                                                  : " is locked on ") +
                                    n.names->label(Name(srv)) +
                                    (client ? " but not locked on it" : " but not its client"));
        }
    }
    return r;
}

inline InvariantReport check_wf(const MonitoredNetwork& mn) { return check_wf(deinstrument(mn)); }

namespace detail {
// A probe instance is an active probe of X when it equals the probe currently
// held by X's monitor.
inline bool active_probe_of(const MonitoredNetwork& mn, Name owner, const Probe& p) {
    const auto& held = mn.at(owner).mstate.probe;
    return held && *held == p;
}
} // namespace detail

// Alarm condition (evaluated literally): an alarm is either raised already or
// made inevitable by the probes and queries currently in flight.
inline bool alarm_condition(const MonitoredNetwork& mn, Name n) {
    Network d = deinstrument(mn);
    WaitForGraph g = locked_map(d);
    for (std::uint32_t i1 = 0; i1 < mn.size(); ++i1) {
        Name n1(i1);
        // (a) n transitively locked on n1
        if (!transitively_locked_on(g, n, n1)) continue;
        // (b) n1 locked on some n2 that is itself locked
        auto t = g.target(n1);
        if (!t) continue;
        Name n2 = *t;
        if (!g.target(n2)) continue;
        // (c) monitors of n2 and everything transitively locked on it hold probes
        bool probes_ok = mn.at(n2).mstate.probe.has_value();
        for (std::uint32_t x = 0; x < mn.size() && probes_ok; ++x)
            if (transitively_locked_on(g, Name(x), n2) && !mn.at(Name(x)).mstate.probe)
                probes_ok = false;
        if (!probes_ok) continue;
        // (d) one of the six delivery configurations
        if (mn.at(n).mstate.alarm) return true;
        for (const auto& item : mn.at(n).mqueue)
            if (item.kind == MonitorQueueItem::Kind::InProbe &&
                detail::active_probe_of(mn, n, item.probe))
                return true;
        const auto& q2 = mn.at(n2).mqueue;
        for (const auto& item : q2)
            if (item.kind == MonitorQueueItem::Kind::OutProbe && item.peer == ClientRef(n1) &&
                detail::active_probe_of(mn, n, item.probe))
                return true;
        bool n1_waiting = std::binary_search(mn.at(n2).mstate.waiting.begin(),
                                             mn.at(n2).mstate.waiting.end(), n1);
        bool seen_query_from_n1 = false;
        for (const auto& item : q2) {
            if (item.is_in_msg() && item.tag == Tag::Query && item.peer == ClientRef(n1))
                seen_query_from_n1 = true;
            if (item.kind == MonitorQueueItem::Kind::InProbe &&
                detail::active_probe_of(mn, n, item.probe)) {
                if (n1_waiting) return true;                 // (d4)
                if (seen_query_from_n1) return true;         // (d5)
            }
        }
        for (const auto& item : mn.at(n).mqueue)
            if (item.is_in_msg() && item.tag == Tag::Query && item.peer == ClientRef(n1))
                return true; // (d6)
    }
    return false;
}

// Complete lock knowledge: monitors never underestimate the network's locks.
inline InvariantReport check_complete_knowledge(const MonitoredNetwork& mn) {
    InvariantReport r;
    Network d = deinstrument(mn);
    WaitForGraph g = locked_map(d);
    for (std::uint32_t i = 0; i < mn.size(); ++i) {
        Name n(i);
        auto target = g.target(n);
        if (!target) continue;
        if (!mn.at(n).mstate.probe)
            r.flag("complete-1", mn.names->label(n) + " is locked but holds no probe");
        Name srv = *target;
        bool known = std::binary_search(mn.at(srv).mstate.waiting.begin(),
                                        mn.at(srv).mstate.waiting.end(), n);
        if (!known) {
            for (const auto& item : mn.at(srv).mqueue)
                if (item.is_in_msg() && item.tag == Tag::Query && item.peer == ClientRef(n))
                    known = true;
        }
        if (!known)
            r.flag("complete-2", mn.names->label(n) + " locked on " + mn.names->label(srv) +
                                     " is neither waited on nor queued");
        if (transitively_locked_on(g, n, n)) {
            // clause 3: some service transitively locked-on from n (the walk
            // revisits n itself) has the alarm condition
            std::vector<bool> seen(g.size(), false);
            bool ok = false;
            Name cur = n;
            while (!ok) {
                auto nx = g.target(cur);
                if (!nx || seen[nx->index()]) break;
                seen[nx->index()] = true;
                cur = *nx;
                ok = alarm_condition(mn, cur);
            }
            if (!ok)
                r.flag("complete-3", mn.names->label(n) +
                                         " is cyclically locked but no alarm condition holds");
        }
    }
    return r;
}

// Sound lock knowledge: monitors never overestimate the network's locks.
inline InvariantReport check_sound_knowledge(const MonitoredNetwork& mn) {
    InvariantReport r;
    Network d = deinstrument(mn);
    WaitForGraph g = locked_map(d);
    for (std::uint32_t i = 0; i < mn.size(); ++i) {
        Name n(i);
        const MonitoredService& ms = mn.at(n);
        if (ms.mstate.probe) {
            bool incoming_response = false;
            for (const auto& item : ms.mqueue)
                if (item.is_in_msg() && item.tag == Tag::Response) incoming_response = true;
            if (!g.target(n) && !incoming_response)
                r.flag("sound-1", mn.names->label(n) +
                                      " holds a probe but is neither locked nor about to unlock");
        }
        for (Name w : ms.mstate.waiting) {
            if (!(g.target(w) && *g.target(w) == n))
                r.flag("sound-2", mn.names->label(w) + " is in waiting of " + mn.names->label(n) +
                                      " but not locked on it");
        }
        for (const auto& item : ms.mqueue) {
            if (item.kind == MonitorQueueItem::Kind::OutProbe) {
                Name to = item.peer.name();
                if (!(g.target(to) && *g.target(to) == n))
                    r.flag("sound-3", "outgoing probe to " + mn.names->label(to) + " at " +
                                          mn.names->label(n) + " without a lock edge");
            }
            if (item.is_probe()) {
                // reflexive-transitive: a monitor may hold its own just-created
                // probe while it waits to be sent
                for (std::uint32_t o = 0; o < mn.size(); ++o) {
                    if (detail::active_probe_of(mn, Name(o), item.probe) && Name(o) != n &&
                        !transitively_locked_on(g, n, Name(o)))
                        r.flag("sound-4", mn.names->label(n) + " carries the active probe of " +
                                              mn.names->label(Name(o)) +
                                              " without being transitively locked on it");
                }
            }
        }
        if (ms.mstate.alarm && !transitively_locked_on(g, n, n))
            r.flag("sound-5",
                   mn.names->label(n) + " raised an alarm without being cyclically locked");
    }
    return r;
}

} // namespace srpc
