#pragma once

#include <algorithm>
#include <stdexcept>
#include <utility>
#include <vector>

#include "srpc/script.hpp"

namespace srpc {

// Raised when a process action falls outside the abstract SRPC machine; the
// simulator aborts the run with this diagnostic.
struct SrpcViolation : std::runtime_error {
    explicit SrpcViolation(const std::string& what) : std::runtime_error(what) {}
};

// A service is an input queue, a process, and an output queue. The shadow
// state set tracks every abstract SRPC state consistent with the actions the
// process has emitted so far; it must never become empty.
struct Service {
    SelectiveQueue input;
    SelectiveQueue output;
    ScriptProcess process;
    std::vector<AbstractSrpcState> shadow{AbstractSrpcState::ready()};
    long busy_actions = 0;
    long divergence_bound = 1000000;

    AbstractSrpcState srpc() const { return process.srpc(); }
};

inline Service make_service(ScriptProcess p) {
    Service s;
    s.shadow = {p.srpc()};
    s.process = std::move(p);
    return s;
}

namespace detail {
inline void shadow_advance(Service& s, const ProcessAction& a) {
    std::vector<AbstractSrpcState> next;
    for (const auto& st : s.shadow)
        for (const auto& t : abstract_targets(st, a))
            if (std::find(next.begin(), next.end(), t) == next.end()) next.push_back(t);
    if (next.empty()) throw SrpcViolation("process action not simulated by the SRPC machine");
    s.shadow = std::move(next);
    bool ready = false;
    for (const auto& st : s.shadow) ready |= st.is_ready();
    s.busy_actions = ready ? 0 : s.busy_actions + 1;
    if (s.busy_actions > s.divergence_bound)
        throw SrpcViolation("process exceeded divergence bound while busy");
}
} // namespace detail

// Internal service transitions: consume a matching input message, emit into
// the output queue, or take a silent step.
struct ServiceInternal {
    enum class Kind { TauIn, TauOut, Tau };
    Kind kind;
    ClientRef peer{}; // TauIn: sender consumed from the input queue
    Tag tag = Tag::Query;
};

inline std::vector<ServiceInternal> service_internal_enabled(const Service& s) {
    std::vector<ServiceInternal> out;
    ProcessOffer o = offer(s.process);
    switch (o.kind) {
        case ProcessOffer::Kind::RecvAnyQuery: {
            // one entry per distinct sender with a queued query, oldest first
            std::vector<ClientRef> seen;
            for (const auto& m : s.input) {
                if (m.tag != Tag::Query) continue;
                if (std::find(seen.begin(), seen.end(), m.peer) != seen.end()) continue;
                seen.push_back(m.peer);
            }
            std::sort(seen.begin(), seen.end());
            for (auto c : seen) out.push_back({ServiceInternal::Kind::TauIn, c, Tag::Query});
            break;
        }
        case ProcessOffer::Kind::RecvResponse:
            if (s.input.has(ClientRef(o.peer), Tag::Response))
                out.push_back({ServiceInternal::Kind::TauIn, ClientRef(o.peer), Tag::Response});
            break;
        case ProcessOffer::Kind::Send:
            out.push_back({ServiceInternal::Kind::TauOut, ClientRef(o.peer), o.tag});
            break;
        case ProcessOffer::Kind::Tau:
            out.push_back({ServiceInternal::Kind::Tau});
            break;
    }
    return out;
}

// Applies an internal transition and returns the process action performed.
inline ProcessAction apply_service_internal(Service& s, const ServiceInternal& t) {
    switch (t.kind) {
        case ServiceInternal::Kind::TauIn: {
            auto msg = s.input.take(t.peer, t.tag);
            if (!msg) throw std::logic_error("tau-in: no matching input message");
            if (!script_receive(s.process, msg->peer, msg->tag, msg->payload))
                throw std::logic_error("tau-in: process refused the message");
            ProcessAction a = ProcessAction::recv(msg->peer, msg->tag);
            detail::shadow_advance(s, a);
            return a;
        }
        case ServiceInternal::Kind::TauOut: {
            auto st = script_step(s.process);
            if (!st || st->action.kind != ProcessAction::Kind::Send)
                throw std::logic_error("tau-out: process is not sending");
            s.output.push({st->action.peer, st->action.tag, st->payload});
            detail::shadow_advance(s, st->action);
            return st->action;
        }
        case ServiceInternal::Kind::Tau: {
            auto st = script_step(s.process);
            if (!st || st->action.kind != ProcessAction::Kind::Tau)
                throw std::logic_error("tau: process is not silent");
            detail::shadow_advance(s, st->action);
            return st->action;
        }
    }
    throw std::logic_error("unreachable");
}

// Distinct (recipient, tag) pairs whose oldest message may leave the output
// queue, in deterministic (recipient, tag) order. Casts and responses leave
// selectively; a query only from the front, so it is always the last message
// of its burst to leave (it marks the sender as locked once it is alone).
inline std::vector<std::pair<Name, Tag>> service_sendable(const Service& s) {
    std::vector<std::pair<Name, Tag>> seen;
    for (std::size_t i = 0; i < s.output.size(); ++i) {
        const QueueMessage& m = s.output.at(i);
        if (m.tag == Tag::Query && i != 0) continue;
        auto key = std::make_pair(m.peer.name(), m.tag);
        if (std::find(seen.begin(), seen.end(), key) == seen.end()) seen.push_back(key);
    }
    std::sort(seen.begin(), seen.end());
    return seen;
}

// Lock check: the process awaits a response from `server`, no such response
// is queued, and the output queue is empty.
inline bool is_locked_on(const Service& s, Name server) {
    AbstractSrpcState st = s.srpc();
    if (!st.is_locked() || st.server != server) return false;
    if (s.input.has(ClientRef(server), Tag::Response)) return false;
    return s.output.empty();
}

} // namespace srpc
