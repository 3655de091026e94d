#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "srpc/names.hpp"

namespace srpc {

// Abstract SRPC process: Ready (awaiting a query from any client),
// Working(client), or Locked(client, server) while awaiting a response.
struct AbstractSrpcState {
    enum class Kind { Ready, Working, Locked };
    Kind kind = Kind::Ready;
    ClientRef client{};  // Working / Locked
    Name server{};       // Locked only; never anonymous

    static AbstractSrpcState ready() { return {}; }
    static AbstractSrpcState working(ClientRef c) { return {Kind::Working, c, Name{}}; }
    static AbstractSrpcState locked(ClientRef c, Name s) { return {Kind::Locked, c, s}; }

    bool is_ready() const { return kind == Kind::Ready; }
    bool is_working() const { return kind == Kind::Working; }
    bool is_locked() const { return kind == Kind::Locked; }
};

inline bool operator==(const AbstractSrpcState& a, const AbstractSrpcState& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case AbstractSrpcState::Kind::Ready: return true;
        case AbstractSrpcState::Kind::Working: return a.client == b.client;
        case AbstractSrpcState::Kind::Locked: return a.client == b.client && a.server == b.server;
    }
    return false;
}
inline bool operator!=(const AbstractSrpcState& a, const AbstractSrpcState& b) { return !(a == b); }

struct ProcessAction {
    enum class Kind { Recv, Send, Tau };
    Kind kind = Kind::Tau;
    ClientRef peer{}; // Recv: sender (may be anonymous); Send: recipient name
    Tag tag = Tag::Query;

    static ProcessAction recv(ClientRef p, Tag t) { return {Kind::Recv, p, t}; }
    static ProcessAction send(Name p, Tag t) { return {Kind::Send, ClientRef(p), t}; }
    static ProcessAction tau() { return {Kind::Tau, ClientRef::anon(), Tag::Query}; }
};

inline bool operator==(const ProcessAction& a, const ProcessAction& b) {
    if (a.kind != b.kind) return false;
    if (a.kind == ProcessAction::Kind::Tau) return true;
    return a.peer == b.peer && a.tag == b.tag;
}

// All abstract states reachable from `s` via `a`. Empty result means the
// action is invalid in `s`. The only two-target case is Working(_) under tau,
// where the rule keeping the process busy and the anonymous return rule are
// both enabled; the concrete process picks which one fires.
inline std::vector<AbstractSrpcState> abstract_targets(const AbstractSrpcState& s,
                                                       const ProcessAction& a) {
    using K = AbstractSrpcState::Kind;
    using AK = ProcessAction::Kind;
    std::vector<AbstractSrpcState> out;
    switch (s.kind) {
        case K::Ready:
            if (a.kind == AK::Recv && a.tag == Tag::Query)
                out.push_back(AbstractSrpcState::working(a.peer));
            break;
        case K::Working:
            if (a.kind == AK::Tau) {
                out.push_back(s);
                if (s.client.is_anon()) out.push_back(AbstractSrpcState::ready());
            } else if (a.kind == AK::Send) {
                if (a.tag == Tag::Response && s.client.is_name() && a.peer == s.client)
                    out.push_back(AbstractSrpcState::ready());
                else if (a.tag == Tag::Cast)
                    out.push_back(s);
                else if (a.tag == Tag::Query)
                    out.push_back(AbstractSrpcState::locked(s.client, a.peer.name()));
            }
            break;
        case K::Locked:
            if (a.kind == AK::Recv && a.tag == Tag::Response && a.peer == ClientRef(s.server))
                out.push_back(AbstractSrpcState::working(s.client));
            break;
    }
    return out;
}

// Single-target convenience; resolves the Working(_)/tau ambiguity in favour
// of staying Working. Returns false when the action is invalid.
inline bool abstract_step(AbstractSrpcState& s, const ProcessAction& a) {
    auto ts = abstract_targets(s, a);
    if (ts.empty()) return false;
    s = ts.front();
    return true;
}

struct ConformanceResult {
    bool ok = true;
    std::size_t violation_index = 0;
    bool divergence = false;
};

// Folds the abstract machine over an action log, tracking every state
// consistent with the log (at most two). A log conforms when no action
// empties the state set; divergence is flagged after more than `bound`
// consecutive actions with no possible Ready state.
inline ConformanceResult conformance_check(const std::vector<ProcessAction>& log,
                                           AbstractSrpcState initial = AbstractSrpcState::ready(),
                                           long bound = 1000000) {
    std::vector<AbstractSrpcState> states{initial};
    long busy = 0;
    for (std::size_t i = 0; i < log.size(); ++i) {
        std::vector<AbstractSrpcState> next;
        for (const auto& s : states)
            for (const auto& t : abstract_targets(s, log[i]))
                if (std::find(next.begin(), next.end(), t) == next.end()) next.push_back(t);
        if (next.empty()) return {false, i, false};
        states = std::move(next);
        bool some_ready = false;
        for (const auto& s : states) some_ready |= s.is_ready();
        busy = some_ready ? 0 : busy + 1;
        if (busy > bound) return {false, i, true};
    }
    return {};
}

} // namespace srpc
