#pragma once

#include <deque>
#include <optional>

#include "srpc/network.hpp"

namespace srpc {

// Probe circulated between monitors. Identity is (owner, serial); the trail
// records the monitors that propagated it and only feeds the deadlock report.
struct Probe {
    Name owner{};
    std::uint64_t serial = 0;
    std::vector<Name> trail;
};

inline bool operator==(const Probe& a, const Probe& b) {
    return a.owner == b.owner && a.serial == b.serial;
}
inline bool operator!=(const Probe& a, const Probe& b) { return !(a == b); }

// Pending probe emission under the delayed strategy: fires when the timer
// runs out, unless the lock was resolved first.
struct DelayedEmission {
    int remaining = 0;
    Probe probe;
    std::vector<Name> recipients;
};

struct MonitorState {
    std::optional<Probe> probe;
    std::vector<Name> waiting; // sorted, unique; never contains the anonymous client
    bool alarm = false;
    std::uint64_t next_serial = 0;
    int probe_delay = 0; // 0 = eager emission
    std::optional<DelayedEmission> timer;
    std::optional<Probe> alarm_probe; // diagnostic: the probe whose return raised the alarm
};

inline void waiting_add(MonitorState& m, Name n) {
    auto it = std::lower_bound(m.waiting.begin(), m.waiting.end(), n);
    if (it == m.waiting.end() || *it != n) m.waiting.insert(it, n);
}

inline void waiting_remove(MonitorState& m, Name n) {
    auto it = std::lower_bound(m.waiting.begin(), m.waiting.end(), n);
    if (it != m.waiting.end() && *it == n) m.waiting.erase(it);
}

struct MonitorQueueItem {
    enum class Kind { InMsg, OutMsg, InProbe, OutProbe };
    Kind kind;
    ClientRef peer{}; // message sender/recipient, or probe source/destination
    Tag tag = Tag::Query;
    PayloadPtr payload;
    Probe probe;

    static MonitorQueueItem in_msg(ClientRef peer, Tag tag, PayloadPtr p) {
        return {Kind::InMsg, peer, tag, std::move(p), {}};
    }
    static MonitorQueueItem out_msg(Name peer, Tag tag, PayloadPtr p) {
        return {Kind::OutMsg, ClientRef(peer), tag, std::move(p), {}};
    }
    static MonitorQueueItem in_probe(Name from, Probe pr) {
        return {Kind::InProbe, ClientRef(from), Tag::Response, nullptr, std::move(pr)};
    }
    static MonitorQueueItem out_probe(Name to, Probe pr) {
        return {Kind::OutProbe, ClientRef(to), Tag::Response, nullptr, std::move(pr)};
    }
    bool is_in_msg() const { return kind == Kind::InMsg; }
    bool is_out_msg() const { return kind == Kind::OutMsg; }
    bool is_probe() const { return kind == Kind::InProbe || kind == Kind::OutProbe; }
};

// The algorithm function. Consumes one monitor queue element and returns the
// outgoing probes, which the caller prepends to the monitor queue. Total for
// every InMsg/OutMsg/InProbe input.
inline std::vector<MonitorQueueItem> handle(MonitorState& m, const MonitorQueueItem& item,
                                            Name self) {
    std::vector<MonitorQueueItem> out;
    switch (item.kind) {
        case MonitorQueueItem::Kind::InMsg:
            switch (item.tag) {
                case Tag::Query:
                    if (item.peer.is_anon()) break; // anonymous queries are ignored
                    waiting_add(m, item.peer.name());
                    if (m.probe) {
                        if (m.probe_delay > 0) {
                            // arm or extend the timer instead of emitting now
                            if (m.timer && m.timer->probe == *m.probe) {
                                m.timer->recipients.push_back(item.peer.name());
                                m.timer->remaining = m.probe_delay;
                            } else {
                                m.timer = DelayedEmission{m.probe_delay, *m.probe,
                                                          {item.peer.name()}};
                            }
                        } else {
                            out.push_back(MonitorQueueItem::out_probe(item.peer.name(), *m.probe));
                        }
                    }
                    break;
                case Tag::Response:
                    m.probe.reset();
                    m.timer.reset();
                    break;
                case Tag::Cast: break; // casts are rewritten before delivery
            }
            break;
        case MonitorQueueItem::Kind::OutMsg:
            switch (item.tag) {
                case Tag::Query:
                    m.probe = Probe{self, m.next_serial++, {}};
                    break;
                case Tag::Response: waiting_remove(m, item.peer.name()); break;
                case Tag::Cast: break;
            }
            break;
        case MonitorQueueItem::Kind::InProbe:
            if (m.probe && *m.probe == item.probe) {
                m.alarm = true;
                if (!m.alarm_probe) m.alarm_probe = item.probe;
            } else if (m.probe) {
                Probe fwd = item.probe;
                fwd.trail.push_back(self);
                for (Name w : m.waiting) out.push_back(MonitorQueueItem::out_probe(w, fwd));
            }
            break;
        case MonitorQueueItem::Kind::OutProbe:
            throw std::logic_error("handle: outgoing probes are never processed");
    }
    return out;
}

// Per-step timer tick for the delayed strategy. On expiry the pending probes
// are emitted only if the lock they were armed for is still current.
inline std::vector<MonitorQueueItem> tick(MonitorState& m) {
    std::vector<MonitorQueueItem> out;
    if (!m.timer) return out;
    if (--m.timer->remaining > 0) return out;
    if (m.probe && *m.probe == m.timer->probe)
        for (Name r : m.timer->recipients)
            out.push_back(MonitorQueueItem::out_probe(r, m.timer->probe));
    m.timer.reset();
    return out;
}

struct MonitoredService {
    std::deque<MonitorQueueItem> mqueue;
    MonitorState mstate;
    Service service;
};

struct MonitoredNetwork {
    NameTablePtr names;
    std::vector<MonitoredService> services;

    MonitoredService& at(Name n) { return services.at(n.index()); }
    const MonitoredService& at(Name n) const { return services.at(n.index()); }
    std::size_t size() const { return services.size(); }
};

inline void prepend(std::deque<MonitorQueueItem>& q, std::vector<MonitorQueueItem> items) {
    for (auto it = items.rbegin(); it != items.rend(); ++it) q.push_front(std::move(*it));
}

// Monitored-network actions: the service-layer actions, monitor-internal
// forwarding, and probe communication.
struct MonitoredAction {
    enum class Kind { Internal, Comm, MonTauIn, MonTauMonIn, MonTauOut, ProbeComm };
    Kind kind;
    Name name{};                // acting service / sender
    Name to{};                  // Comm, ProbeComm
    Tag tag = Tag::Query;       // Comm, MonTauIn, MonTauOut
    ClientRef peer{};           // MonTauIn source, MonTauOut recipient
    ServiceInternal internal{}; // Internal
    Probe probe;                // ProbeComm, MonTauMonIn

    static MonitoredAction internal_act(Name n, ServiceInternal t) {
        MonitoredAction a{Kind::Internal, n, Name{}, Tag::Query, {}, t, {}};
        return a;
    }
    static MonitoredAction comm(Name from, Name to, Tag tag) {
        return {Kind::Comm, from, to, tag, {}, {}, {}};
    }
    static MonitoredAction mon_tau_in(Name n, ClientRef peer, Tag tag) {
        return {Kind::MonTauIn, n, Name{}, tag, peer, {}, {}};
    }
    static MonitoredAction mon_tau_mon_in(Name n, Probe p) {
        return {Kind::MonTauMonIn, n, Name{}, Tag::Query, {}, {}, std::move(p)};
    }
    static MonitoredAction mon_tau_out(Name n, Name peer, Tag tag) {
        return {Kind::MonTauOut, n, Name{}, tag, ClientRef(peer), {}, {}};
    }
    static MonitoredAction probe_comm(Name from, Name to, Probe p) {
        return {Kind::ProbeComm, from, to, Tag::Query, {}, {}, std::move(p)};
    }

    // the action classes a network-layer observer sees
    bool is_service_comm() const { return kind == Kind::Comm; }
    bool is_service_internal() const { return kind == Kind::Internal; }
    bool is_monitor_internal() const {
        return kind == Kind::MonTauIn || kind == Kind::MonTauMonIn || kind == Kind::MonTauOut;
    }
    bool is_probe_comm() const { return kind == Kind::ProbeComm; }
    // monitor-flushing actions exclude only service computation
    bool is_flushing() const { return !is_service_internal(); }
};

inline bool operator==(const MonitoredAction& a, const MonitoredAction& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case MonitoredAction::Kind::Internal:
            return a.name == b.name && a.internal.kind == b.internal.kind &&
                   a.internal.peer == b.internal.peer && a.internal.tag == b.internal.tag;
        case MonitoredAction::Kind::Comm:
            return a.name == b.name && a.to == b.to && a.tag == b.tag;
        case MonitoredAction::Kind::MonTauIn:
            return a.name == b.name && a.peer == b.peer && a.tag == b.tag;
        case MonitoredAction::Kind::MonTauMonIn: return a.name == b.name && a.probe == b.probe;
        case MonitoredAction::Kind::MonTauOut:
            return a.name == b.name && a.peer == b.peer && a.tag == b.tag;
        case MonitoredAction::Kind::ProbeComm:
            return a.name == b.name && a.to == b.to && a.probe == b.probe;
    }
    return false;
}

inline std::vector<MonitoredAction> monitored_network_enabled(const MonitoredNetwork& mn) {
    std::vector<MonitoredAction> out;
    for (std::uint32_t i = 0; i < mn.services.size(); ++i) {
        Name name(i);
        const MonitoredService& ms = mn.services[i];
        if (!ms.mqueue.empty()) {
            const MonitorQueueItem& front = ms.mqueue.front();
            switch (front.kind) {
                case MonitorQueueItem::Kind::InMsg:
                    out.push_back(MonitoredAction::mon_tau_in(name, front.peer, front.tag));
                    break;
                case MonitorQueueItem::Kind::InProbe:
                    out.push_back(MonitoredAction::mon_tau_mon_in(name, front.probe));
                    break;
                default: break;
            }
        }
        for (auto [to, tag] : service_sendable(ms.service))
            out.push_back(MonitoredAction::mon_tau_out(name, to, tag));
        for (const auto& t : service_internal_enabled(ms.service))
            out.push_back(MonitoredAction::internal_act(name, t));
        if (!ms.mqueue.empty()) {
            const MonitorQueueItem& front = ms.mqueue.front();
            if (front.is_out_msg())
                out.push_back(MonitoredAction::comm(name, front.peer.name(), front.tag));
            else if (front.kind == MonitorQueueItem::Kind::OutProbe)
                out.push_back(MonitoredAction::probe_comm(name, front.peer.name(), front.probe));
        }
    }
    return out;
}

inline void monitored_network_step(MonitoredNetwork& mn, const MonitoredAction& a) {
    MonitoredService& ms = mn.at(a.name);
    switch (a.kind) {
        case MonitoredAction::Kind::Internal: {
            auto enabled = service_internal_enabled(ms.service);
            bool ok = false;
            for (const auto& t : enabled)
                ok |= t.kind == a.internal.kind && t.peer == a.internal.peer &&
                      t.tag == a.internal.tag;
            if (!ok) throw SimError("monitored internal action not enabled");
            apply_service_internal(ms.service, a.internal);
            return;
        }
        case MonitoredAction::Kind::MonTauIn: {
            if (ms.mqueue.empty() || !ms.mqueue.front().is_in_msg() ||
                ms.mqueue.front().peer != a.peer || ms.mqueue.front().tag != a.tag)
                throw SimError("mon-tau-in: queue front mismatch");
            MonitorQueueItem item = std::move(ms.mqueue.front());
            ms.mqueue.pop_front();
            ms.service.input.push({item.peer, item.tag, item.payload});
            prepend(ms.mqueue, handle(ms.mstate, item, a.name));
            return;
        }
        case MonitoredAction::Kind::MonTauMonIn: {
            if (ms.mqueue.empty() || ms.mqueue.front().kind != MonitorQueueItem::Kind::InProbe ||
                !(ms.mqueue.front().probe == a.probe))
                throw SimError("mon-tau-mon-in: queue front mismatch");
            MonitorQueueItem item = std::move(ms.mqueue.front());
            ms.mqueue.pop_front();
            prepend(ms.mqueue, handle(ms.mstate, item, a.name));
            return;
        }
        case MonitoredAction::Kind::MonTauOut: {
            auto sendable = service_sendable(ms.service);
            if (std::find(sendable.begin(), sendable.end(),
                          std::make_pair(a.peer.name(), a.tag)) == sendable.end())
                throw SimError("mon-tau-out: message not sendable");
            auto msg = ms.service.output.take(a.peer, a.tag);
            if (!msg) throw SimError("mon-tau-out: no matching output message");
            ms.mqueue.push_back(MonitorQueueItem::out_msg(a.peer.name(), a.tag, msg->payload));
            return;
        }
        case MonitoredAction::Kind::Comm: {
            if (ms.mqueue.empty() || !ms.mqueue.front().is_out_msg() ||
                ms.mqueue.front().peer != ClientRef(a.to) || ms.mqueue.front().tag != a.tag)
                throw SimError("mon-out: queue front mismatch");
            MonitorQueueItem item = std::move(ms.mqueue.front());
            ms.mqueue.pop_front();
            prepend(ms.mqueue, handle(ms.mstate, item, a.name));
            MonitoredService& rcv = mn.at(a.to);
            if (a.tag == Tag::Cast)
                rcv.mqueue.push_back(
                    MonitorQueueItem::in_msg(ClientRef::anon(), Tag::Query, item.payload));
            else
                rcv.mqueue.push_back(
                    MonitorQueueItem::in_msg(ClientRef(a.name), a.tag, item.payload));
            return;
        }
        case MonitoredAction::Kind::ProbeComm: {
            if (ms.mqueue.empty() || ms.mqueue.front().kind != MonitorQueueItem::Kind::OutProbe ||
                ms.mqueue.front().peer != ClientRef(a.to) || !(ms.mqueue.front().probe == a.probe))
                throw SimError("mon-mon-out: queue front mismatch");
            MonitorQueueItem item = std::move(ms.mqueue.front());
            ms.mqueue.pop_front();
            mn.at(a.to).mqueue.push_back(MonitorQueueItem::in_probe(a.name, item.probe));
            return;
        }
    }
}

struct NotInitial : std::runtime_error {
    explicit NotInitial(const std::string& what) : std::runtime_error(what) {}
};

// Wraps every service of an initial network with a fresh monitor.
inline MonitoredNetwork instrument(const Network& n, int probe_delay = 0) {
    auto violations = initial_violations(n);
    if (!violations.empty()) throw NotInitial("not an initial network: " + violations.front());
    MonitoredNetwork mn;
    mn.names = n.names;
    mn.services.reserve(n.services.size());
    for (const auto& s : n.services) {
        MonitoredService ms;
        ms.mstate.probe_delay = probe_delay;
        ms.service = s;
        mn.services.push_back(std::move(ms));
    }
    return mn;
}

// Strips monitors: queued incoming service messages are appended after the
// service input, queued outgoing ones precede the service output, and probes
// and monitor states are discarded.
inline Network deinstrument(const MonitoredNetwork& mn) {
    Network n;
    n.names = mn.names;
    n.services.reserve(mn.services.size());
    for (const auto& ms : mn.services) {
        Service s = ms.service;
        SelectiveQueue input;
        for (const auto& m : s.input) input.push(m);
        for (const auto& item : ms.mqueue)
            if (item.is_in_msg()) input.push({item.peer, item.tag, item.payload});
        SelectiveQueue output;
        for (const auto& item : ms.mqueue)
            if (item.is_out_msg()) output.push({item.peer, item.tag, item.payload});
        for (const auto& m : s.output) output.push(m);
        s.input = std::move(input);
        s.output = std::move(output);
        n.services.push_back(std::move(s));
    }
    return n;
}

// Projects a monitored path onto the unmonitored action labels.
inline std::vector<NetworkAction> strip_path(const std::vector<MonitoredAction>& mpath) {
    std::vector<NetworkAction> out;
    for (const auto& a : mpath) {
        if (a.is_service_internal()) out.push_back(NetworkAction::internal_act(a.name, a.internal));
        else if (a.is_service_comm()) out.push_back(NetworkAction::comm(a.name, a.to, a.tag));
    }
    return out;
}

struct LiftError : std::runtime_error {
    explicit LiftError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
// Runs monitor-internal and probe actions at `n` until its monitor queue is
// empty or an outgoing service message reaches the front. Appends what it did.
inline void lift_flush(MonitoredNetwork& mn, Name n, std::vector<MonitoredAction>& out) {
    long guard = 0;
    while (true) {
        if (guard++ > 1000000) throw LiftError("lift: queue flush did not terminate");
        auto& q = mn.at(n).mqueue;
        if (q.empty() || q.front().is_out_msg()) return;
        const MonitorQueueItem& front = q.front();
        MonitoredAction a{};
        switch (front.kind) {
            case MonitorQueueItem::Kind::InMsg:
                a = MonitoredAction::mon_tau_in(n, front.peer, front.tag);
                break;
            case MonitorQueueItem::Kind::InProbe:
                a = MonitoredAction::mon_tau_mon_in(n, front.probe);
                break;
            case MonitorQueueItem::Kind::OutProbe:
                a = MonitoredAction::probe_comm(n, front.peer.name(), front.probe);
                break;
            case MonitorQueueItem::Kind::OutMsg: return;
        }
        monitored_network_step(mn, a);
        out.push_back(a);
    }
}
} // namespace detail

// Realizes one unmonitored action in the monitored network by adding the
// monitor forwarding steps around it. Applies the actions to `mn` and returns
// them; the stripped result is exactly [a].
inline std::vector<MonitoredAction> lift_action(MonitoredNetwork& mn, const NetworkAction& a) {
    std::vector<MonitoredAction> out;
    if (a.kind == NetworkAction::Kind::Internal) {
        if (a.internal.kind == ServiceInternal::Kind::TauIn) {
            // the message may still sit in the monitor queue; forward everything
            detail::lift_flush(mn, a.name, out);
        }
        MonitoredAction act = MonitoredAction::internal_act(a.name, a.internal);
        monitored_network_step(mn, act);
        out.push_back(act);
        return out;
    }
    // communication: move the message into the monitor queue, clear the way,
    // then perform the network-level send. Lifted runs never leave another
    // outgoing message behind, so the queued one is ours.
    for (const auto& item : mn.at(a.name).mqueue)
        if (item.is_out_msg())
            throw LiftError("lift: sender queue already holds an outgoing message");
    MonitoredAction tau_out = MonitoredAction::mon_tau_out(a.name, a.to, a.tag);
    monitored_network_step(mn, tau_out);
    out.push_back(tau_out);
    detail::lift_flush(mn, a.name, out);
    MonitoredAction comm = MonitoredAction::comm(a.name, a.to, a.tag);
    monitored_network_step(mn, comm);
    out.push_back(comm);
    return out;
}

// Canonical rendering for digests and golden tests.
inline std::string probe_str(const NameTable& t, const Probe& p) {
    return t.label(p.owner) + "#" + std::to_string(p.serial);
}

inline std::string canonical_string(const MonitoredNetwork& mn) {
    std::ostringstream os;
    Network inner;
    inner.names = mn.names;
    for (std::uint32_t i = 0; i < mn.services.size(); ++i) {
        const MonitoredService& ms = mn.services[i];
        os << mn.names->label(Name(i)) << " mq=[";
        for (std::size_t k = 0; k < ms.mqueue.size(); ++k) {
            const auto& item = ms.mqueue[k];
            if (k) os << ' ';
            switch (item.kind) {
                case MonitorQueueItem::Kind::InMsg:
                    os << "in(" << mn.names->label(item.peer) << ',' << tag_str(item.tag) << ')';
                    break;
                case MonitorQueueItem::Kind::OutMsg:
                    os << "out(" << mn.names->label(item.peer) << ',' << tag_str(item.tag) << ')';
                    break;
                case MonitorQueueItem::Kind::InProbe:
                    os << "inp(" << probe_str(*mn.names, item.probe) << ')';
                    break;
                case MonitorQueueItem::Kind::OutProbe:
                    os << "outp(" << mn.names->label(item.peer) << ','
                       << probe_str(*mn.names, item.probe) << ')';
                    break;
            }
        }
        os << "] probe=";
        if (ms.mstate.probe) os << probe_str(*mn.names, *ms.mstate.probe);
        else os << '_';
        os << " waiting={";
        for (std::size_t k = 0; k < ms.mstate.waiting.size(); ++k) {
            if (k) os << ' ';
            os << mn.names->label(ms.mstate.waiting[k]);
        }
        os << "} alarm=" << (ms.mstate.alarm ? 1 : 0) << ' ';
        Network view;
        view.names = mn.names;
        os << to_string(view, ms.service.srpc()) << " in=";
        render_queue(os, view, ms.service.input);
        os << " out=";
        render_queue(os, view, ms.service.output);
        os << '\n';
    }
    return os.str();
}

// Ticks every monitor timer once; expired emissions are prepended to their
// monitor queue. Returns true if anything was emitted.
inline bool tick_timers(MonitoredNetwork& mn) {
    bool emitted = false;
    for (auto& ms : mn.services) {
        auto probes = tick(ms.mstate);
        emitted |= !probes.empty();
        prepend(ms.mqueue, std::move(probes));
    }
    return emitted;
}

inline bool any_alarm(const MonitoredNetwork& mn) {
    for (const auto& ms : mn.services)
        if (ms.mstate.alarm) return true;
    return false;
}

inline bool any_timer(const MonitoredNetwork& mn) {
    for (const auto& ms : mn.services)
        if (ms.mstate.timer) return true;
    return false;
}

} // namespace srpc
