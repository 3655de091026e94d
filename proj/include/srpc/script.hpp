#pragma once

#include <cassert>
#include <optional>
#include <utility>

#include "srpc/process.hpp"
#include "srpc/program.hpp"
#include "srpc/queue.hpp"

namespace srpc {

// Deterministic interpreter driving a service's process. A proxy forwards
// whatever query payload it receives to its fixed target and relays the
// response back; an endpoint runs the program carried by the query.
struct Role {
    enum class Kind { Endpoint, Proxy };
    Kind kind = Kind::Endpoint;
    Name proxy_target{};

    static Role endpoint() { return {}; }
    static Role proxy(Name target) { return {Kind::Proxy, target}; }
    bool is_proxy() const { return kind == Kind::Proxy; }
};

struct ScriptProcess {
    enum class Mode { Ready, Run, Await };

    Role role;
    Mode mode = Mode::Ready;
    ClientRef client{};   // active client while Run/Await
    Name await_from{};    // Await: name we expect a response from
    PayloadPtr fwd;       // proxy: payload still to forward
    PayloadPtr prog;      // endpoint: program being executed
    std::size_t pc = 0;
    int delay_left = 0;

    AbstractSrpcState srpc() const {
        switch (mode) {
            case Mode::Ready: return AbstractSrpcState::ready();
            case Mode::Run: return AbstractSrpcState::working(client);
            case Mode::Await: return AbstractSrpcState::locked(client, await_from);
        }
        return AbstractSrpcState::ready();
    }
};

// Starts a process already busy with an anonymous session, as a just-deployed
// client application would be.
inline ScriptProcess scripted_process(Program program, std::string session) {
    ScriptProcess p;
    p.role = Role::endpoint();
    p.mode = ScriptProcess::Mode::Run;
    p.client = ClientRef::anon();
    p.prog = make_payload(std::move(program), std::move(session));
    return p;
}

inline ScriptProcess idle_process(Role role) {
    ScriptProcess p;
    p.role = role;
    return p;
}

// What the interpreter does next: either it is blocked on a receive, or it
// deterministically emits one action.
struct ProcessOffer {
    enum class Kind { RecvAnyQuery, RecvResponse, Send, Tau };
    Kind kind;
    Name peer{};        // RecvResponse source / Send recipient
    Tag tag = Tag::Query;
    PayloadPtr payload; // Send Query/Cast payload
};

namespace detail {
// Skip zero-length delays so an offer is never parked on one.
inline void normalize(ScriptProcess& p) {
    if (p.mode != ScriptProcess::Mode::Run || p.role.is_proxy()) return;
    const Program& prog = p.prog->program;
    while (p.pc < prog.size() && prog[p.pc].kind == Instruction::Kind::Delay &&
           (p.delay_left <= 0 && prog[p.pc].steps <= 0)) {
        ++p.pc;
    }
    if (p.pc < prog.size() && prog[p.pc].kind == Instruction::Kind::Delay && p.delay_left <= 0)
        p.delay_left = prog[p.pc].steps;
}
} // namespace detail

inline ProcessOffer offer(const ScriptProcess& p) {
    using M = ScriptProcess::Mode;
    using OK = ProcessOffer::Kind;
    switch (p.mode) {
        case M::Ready: return {OK::RecvAnyQuery};
        case M::Await: return {OK::RecvResponse, p.await_from, Tag::Response, nullptr};
        case M::Run: break;
    }
    if (p.role.is_proxy()) {
        if (p.fwd) return {OK::Send, p.role.proxy_target, Tag::Query, p.fwd};
        if (p.client.is_name()) return {OK::Send, p.client.name(), Tag::Response, nullptr};
        return {OK::Tau};
    }
    ScriptProcess q = p;
    detail::normalize(q);
    const Program& prog = q.prog->program;
    if (q.pc >= prog.size()) {
        if (q.client.is_name()) return {OK::Send, q.client.name(), Tag::Response, nullptr};
        return {OK::Tau}; // anonymous client: return to Ready without replying
    }
    const Instruction& ins = prog[q.pc];
    const std::string& sess = ins.session.empty() ? q.prog->session : ins.session;
    switch (ins.kind) {
        case Instruction::Kind::Delay: return {OK::Tau};
        case Instruction::Kind::Call:
            return {OK::Send, ins.target, Tag::Query, make_payload(ins.body, sess)};
        case Instruction::Kind::CastTo:
            return {OK::Send, ins.target, Tag::Cast, make_payload(ins.body, sess)};
    }
    return {OK::Tau};
}

struct ScriptStep {
    ProcessAction action;
    PayloadPtr payload; // for sends
};

// Advances a Run-mode process by its offered action. Returns nothing when the
// process is blocked on a receive (a normal outcome; the service layer feeds
// it from the input queue via script_receive).
inline std::optional<ScriptStep> script_step(ScriptProcess& p) {
    using M = ScriptProcess::Mode;
    ProcessOffer o = offer(p);
    switch (o.kind) {
        case ProcessOffer::Kind::RecvAnyQuery:
        case ProcessOffer::Kind::RecvResponse: return std::nullopt;
        case ProcessOffer::Kind::Tau: break;
        case ProcessOffer::Kind::Send: break;
    }
    if (p.role.is_proxy()) {
        if (o.kind == ProcessOffer::Kind::Send && o.tag == Tag::Query) {
            p.mode = M::Await;
            p.await_from = o.peer;
            p.fwd = nullptr;
            return ScriptStep{ProcessAction::send(o.peer, Tag::Query), o.payload};
        }
        // reply or anonymous return, then loop back to Ready
        ScriptStep st{o.kind == ProcessOffer::Kind::Send
                          ? ProcessAction::send(o.peer, Tag::Response)
                          : ProcessAction::tau(),
                      nullptr};
        p = idle_process(p.role);
        return st;
    }
    detail::normalize(p);
    const Program& prog = p.prog->program;
    if (p.pc >= prog.size()) {
        ScriptStep st{o.kind == ProcessOffer::Kind::Send
                          ? ProcessAction::send(o.peer, Tag::Response)
                          : ProcessAction::tau(),
                      nullptr};
        Role r = p.role;
        p = idle_process(r);
        return st;
    }
    const Instruction& ins = prog[p.pc];
    switch (ins.kind) {
        case Instruction::Kind::Delay:
            assert(p.delay_left > 0);
            if (--p.delay_left == 0) ++p.pc;
            return ScriptStep{ProcessAction::tau(), nullptr};
        case Instruction::Kind::Call:
            p.mode = M::Await;
            p.await_from = ins.target;
            ++p.pc;
            return ScriptStep{ProcessAction::send(ins.target, Tag::Query), o.payload};
        case Instruction::Kind::CastTo:
            ++p.pc;
            return ScriptStep{ProcessAction::send(ins.target, Tag::Cast), o.payload};
    }
    return std::nullopt;
}

// Feeds a received message to the process. Preconditions mirror the offer:
// queries are only consumed when Ready, responses only from the awaited name.
inline bool script_receive(ScriptProcess& p, ClientRef peer, Tag tag, const PayloadPtr& payload) {
    using M = ScriptProcess::Mode;
    if (tag == Tag::Query) {
        if (p.mode != M::Ready) return false;
        p.mode = M::Run;
        p.client = peer;
        if (p.role.is_proxy()) {
            p.fwd = payload ? payload : make_payload({}, "");
        } else {
            p.prog = payload ? payload : make_payload({}, "");
            p.pc = 0;
            p.delay_left = 0;
        }
        return true;
    }
    if (tag == Tag::Response) {
        if (p.mode != M::Await || peer != ClientRef(p.await_from)) return false;
        p.mode = M::Run;
        if (p.role.is_proxy()) p.fwd = nullptr;
        return true;
    }
    return false; // casts never reach a process directly
}

} // namespace srpc
