#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "srpc/service.hpp"

namespace srpc {

struct SimError : std::runtime_error {
    explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

// Total map from names to services; the domain is fixed for the whole run.
struct Network {
    NameTablePtr names;
    std::vector<Service> services;

    Service& at(Name n) { return services.at(n.index()); }
    const Service& at(Name n) const { return services.at(n.index()); }
    std::size_t size() const { return services.size(); }
};

// Internal action of one service, or the communication of a message.
struct NetworkAction {
    enum class Kind { Internal, Comm };
    Kind kind;
    Name name{};                // Internal: acting service; Comm: sender
    Name to{};                  // Comm only
    Tag tag = Tag::Query;       // Comm only
    ServiceInternal internal{}; // Internal only

    static NetworkAction internal_act(Name n, ServiceInternal t) {
        NetworkAction a{Kind::Internal, n, Name{}, Tag::Query, t};
        return a;
    }
    static NetworkAction comm(Name from, Name to, Tag tag) {
        return {Kind::Comm, from, to, tag, {}};
    }
    bool is_comm() const { return kind == Kind::Comm; }
};

inline bool operator==(const NetworkAction& a, const NetworkAction& b) {
    if (a.kind != b.kind) return false;
    if (a.kind == NetworkAction::Kind::Comm)
        return a.name == b.name && a.to == b.to && a.tag == b.tag;
    return a.name == b.name && a.internal.kind == b.internal.kind &&
           a.internal.peer == b.internal.peer && a.internal.tag == b.internal.tag;
}

// Enumerates enabled actions in deterministic order: services ascending, each
// service's internal transitions first, then its sends.
inline std::vector<NetworkAction> network_enabled(const Network& n) {
    std::vector<NetworkAction> out;
    for (std::uint32_t i = 0; i < n.services.size(); ++i) {
        Name name(i);
        for (const auto& t : service_internal_enabled(n.services[i]))
            out.push_back(NetworkAction::internal_act(name, t));
        for (auto [to, tag] : service_sendable(n.services[i]))
            out.push_back(NetworkAction::comm(name, to, tag));
    }
    return out;
}

// Applies one action in place. Communication moves the oldest matching
// message from the sender's output to the back of the recipient's input;
// casts are rewritten as queries from the anonymous client.
inline void network_step(Network& n, const NetworkAction& a) {
    if (a.kind == NetworkAction::Kind::Internal) {
        Service& s = n.at(a.name);
        // validate against the current offer before mutating
        auto enabled = service_internal_enabled(s);
        bool ok = false;
        for (const auto& t : enabled)
            ok |= t.kind == a.internal.kind && t.peer == a.internal.peer &&
                  t.tag == a.internal.tag;
        if (!ok) throw SimError("internal action not enabled");
        apply_service_internal(s, a.internal);
        return;
    }
    if (a.to.index() >= n.services.size()) throw SimError("comm: unknown recipient");
    auto sendable = service_sendable(n.at(a.name));
    if (std::find(sendable.begin(), sendable.end(), std::make_pair(a.to, a.tag)) ==
        sendable.end())
        throw SimError("comm: message not sendable");
    auto msg = n.at(a.name).output.take(ClientRef(a.to), a.tag);
    if (!msg) throw SimError("comm: no matching output message");
    if (a.tag == Tag::Cast)
        n.at(a.to).input.push({ClientRef::anon(), Tag::Query, msg->payload});
    else
        n.at(a.to).input.push({ClientRef(a.name), a.tag, msg->payload});
}

inline Network network_after(Network n, const NetworkAction& a) {
    network_step(n, a);
    return n;
}

// Initial-network clauses: empty queues, no locks, and busy services may only
// be serving the anonymous client. Returns one message per violated clause.
inline std::vector<std::string> initial_violations(const Network& n) {
    std::vector<std::string> out;
    for (std::uint32_t i = 0; i < n.services.size(); ++i) {
        const Service& s = n.services[i];
        const std::string who = n.names->label(Name(i));
        if (!s.input.empty() || !s.output.empty())
            out.push_back(who + ": queues are not empty");
        if (s.srpc().is_locked()) out.push_back(who + ": service is locked");
        if (s.srpc().is_working() && !s.srpc().client.is_anon())
            out.push_back(who + ": working for a named client");
    }
    return out;
}

// Canonical text rendering with deterministic field order, for golden tests
// and state digests.
inline std::string to_string(const Network& n, const AbstractSrpcState& st) {
    switch (st.kind) {
        case AbstractSrpcState::Kind::Ready: return "Ready";
        case AbstractSrpcState::Kind::Working: return "Working(" + n.names->label(st.client) + ")";
        case AbstractSrpcState::Kind::Locked:
            return "Locked(" + n.names->label(st.client) + "," + n.names->label(st.server) + ")";
    }
    return "?";
}

inline void render_queue(std::ostringstream& os, const Network& n, const SelectiveQueue& q) {
    os << '[';
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (i) os << ' ';
        os << '(' << n.names->label(q.at(i).peer) << ',' << tag_str(q.at(i).tag) << ')';
    }
    os << ']';
}

inline std::string canonical_string(const Network& n) {
    std::ostringstream os;
    for (std::uint32_t i = 0; i < n.services.size(); ++i) {
        const Service& s = n.services[i];
        os << n.names->label(Name(i)) << ' ' << to_string(n, s.srpc()) << " in=";
        render_queue(os, n, s.input);
        os << " out=";
        render_queue(os, n, s.output);
        os << '\n';
    }
    return os.str();
}

} // namespace srpc
