#pragma once

#include <memory>
#include <string>
#include <vector>

#include "srpc/names.hpp"

namespace srpc {

struct Instruction;
using Program = std::vector<Instruction>;

// One step of a session script. Call/CastTo carry the program the callee
// runs; the caller's continuation is simply the rest of its own program.
struct Instruction {
    enum class Kind { Delay, Call, CastTo };
    Kind kind;
    int steps = 0;       // Delay
    Name target{};       // Call / CastTo
    Program body;        // program shipped to the callee
    std::string session; // overrides the inherited session label when set

    static Instruction delay(int n) { return {Kind::Delay, n, Name{}, {}, {}}; }
    static Instruction call(Name t, Program b) { return {Kind::Call, 0, t, std::move(b), {}}; }
    static Instruction cast_to(Name t, Program b) {
        return {Kind::CastTo, 0, t, std::move(b), {}};
    }
};

inline bool operator==(const Instruction& a, const Instruction& b) {
    return a.kind == b.kind && a.steps == b.steps && a.target == b.target && a.body == b.body &&
           a.session == b.session;
}

// Query payload: the script the recipient runs, plus the originating session
// label (diagnostics only). Responses carry no payload.
struct Payload {
    Program program;
    std::string session;
};

using PayloadPtr = std::shared_ptr<const Payload>;

inline PayloadPtr make_payload(Program p, std::string session) {
    return std::make_shared<const Payload>(Payload{std::move(p), std::move(session)});
}

// Upper bound on process actions needed to run `p` to completion:
// a Call costs one send and one receive, a cast one send, a delay its steps.
inline long program_action_bound(const Program& p) {
    long n = 0;
    for (const auto& ins : p) {
        switch (ins.kind) {
            case Instruction::Kind::Delay: n += ins.steps; break;
            case Instruction::Kind::Call: n += 2; break;
            case Instruction::Kind::CastTo: n += 1; break;
        }
    }
    return n;
}

} // namespace srpc
