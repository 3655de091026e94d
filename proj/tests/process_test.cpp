#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "srpc/process.hpp"

using namespace srpc;

namespace {
const Name n1(1), n2(2), n3(3);
const ClientRef anon = ClientRef::anon();

bool has_target(const std::vector<AbstractSrpcState>& v, const AbstractSrpcState& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}
} // namespace

TEST_CASE("ready accepts a query from any client") {
    auto ts = abstract_targets(AbstractSrpcState::ready(), ProcessAction::recv(n1, Tag::Query));
    REQUIRE(ts.size() == 1);
    CHECK(ts[0] == AbstractSrpcState::working(n1));

    ts = abstract_targets(AbstractSrpcState::ready(), ProcessAction::recv(anon, Tag::Query));
    REQUIRE(ts.size() == 1);
    CHECK(ts[0] == AbstractSrpcState::working(anon));
}

TEST_CASE("working under tau: anonymous client may also return to ready") {
    auto ts = abstract_targets(AbstractSrpcState::working(n1), ProcessAction::tau());
    REQUIRE(ts.size() == 1);
    CHECK(ts[0] == AbstractSrpcState::working(n1));

    ts = abstract_targets(AbstractSrpcState::working(anon), ProcessAction::tau());
    REQUIRE(ts.size() == 2);
    CHECK(has_target(ts, AbstractSrpcState::working(anon)));
    CHECK(has_target(ts, AbstractSrpcState::ready()));
}

TEST_CASE("working replies only to its own named client") {
    auto ts =
        abstract_targets(AbstractSrpcState::working(n1), ProcessAction::send(n1, Tag::Response));
    REQUIRE(ts.size() == 1);
    CHECK(ts[0] == AbstractSrpcState::ready());

    CHECK(abstract_targets(AbstractSrpcState::working(n1), ProcessAction::send(n2, Tag::Response))
              .empty());
    CHECK(abstract_targets(AbstractSrpcState::working(anon), ProcessAction::send(n2, Tag::Response))
              .empty());
}

TEST_CASE("working may cast or query") {
    auto ts = abstract_targets(AbstractSrpcState::working(n1), ProcessAction::send(n3, Tag::Cast));
    REQUIRE(ts.size() == 1);
    CHECK(ts[0] == AbstractSrpcState::working(n1));

    ts = abstract_targets(AbstractSrpcState::working(n1), ProcessAction::send(n2, Tag::Query));
    REQUIRE(ts.size() == 1);
    CHECK(ts[0] == AbstractSrpcState::locked(n1, n2));
}

TEST_CASE("locked only accepts the awaited response") {
    auto st = AbstractSrpcState::locked(n1, n2);
    auto ts = abstract_targets(st, ProcessAction::recv(n2, Tag::Response));
    REQUIRE(ts.size() == 1);
    CHECK(ts[0] == AbstractSrpcState::working(n1));

    CHECK(abstract_targets(st, ProcessAction::recv(n3, Tag::Response)).empty());
    CHECK(abstract_targets(st, ProcessAction::send(n3, Tag::Query)).empty());
    CHECK(abstract_targets(st, ProcessAction::tau()).empty());
}

TEST_CASE("exhaustive sweep matches a per-rule oracle") {
    // enumerate a small universe of states and actions, check abstract_targets
    // against a direct restatement of the seven rules
    std::vector<AbstractSrpcState> states = {
        AbstractSrpcState::ready(),          AbstractSrpcState::working(anon),
        AbstractSrpcState::working(n1),      AbstractSrpcState::locked(anon, n2),
        AbstractSrpcState::locked(n1, n2),   AbstractSrpcState::locked(n2, n1),
    };
    std::vector<ProcessAction> actions = {ProcessAction::tau()};
    for (auto peer : {ClientRef(anon), ClientRef(n1), ClientRef(n2), ClientRef(n3)})
        for (Tag t : {Tag::Query, Tag::Response, Tag::Cast})
            actions.push_back(ProcessAction::recv(peer, t));
    for (Name peer : {n1, n2, n3})
        for (Tag t : {Tag::Query, Tag::Response, Tag::Cast})
            actions.push_back(ProcessAction::send(peer, t));

    for (const auto& s : states) {
        for (const auto& a : actions) {
            std::vector<AbstractSrpcState> want;
            if (s.is_ready() && a.kind == ProcessAction::Kind::Recv && a.tag == Tag::Query)
                want.push_back(AbstractSrpcState::working(a.peer));
            if (s.is_working()) {
                if (a.kind == ProcessAction::Kind::Tau) {
                    want.push_back(s);
                    if (s.client.is_anon()) want.push_back(AbstractSrpcState::ready());
                }
                if (a.kind == ProcessAction::Kind::Send && a.tag == Tag::Response &&
                    s.client.is_name() && a.peer == s.client)
                    want.push_back(AbstractSrpcState::ready());
                if (a.kind == ProcessAction::Kind::Send && a.tag == Tag::Cast) want.push_back(s);
                if (a.kind == ProcessAction::Kind::Send && a.tag == Tag::Query)
                    want.push_back(AbstractSrpcState::locked(s.client, a.peer.name()));
            }
            if (s.is_locked() && a.kind == ProcessAction::Kind::Recv &&
                a.tag == Tag::Response && a.peer == ClientRef(s.server))
                want.push_back(AbstractSrpcState::working(s.client));

            auto got = abstract_targets(s, a);
            REQUIRE(got.size() == want.size());
            for (const auto& w : want) CHECK(has_target(got, w));
        }
    }
}

TEST_CASE("conformance accepts the proxy action trace") {
    // the forwarding proxy's action sequence, starting Ready
    std::vector<ProcessAction> log = {
        ProcessAction::recv(n1, Tag::Query),    ProcessAction::send(n2, Tag::Query),
        ProcessAction::recv(n2, Tag::Response), ProcessAction::send(n1, Tag::Response),
    };
    CHECK(conformance_check(log).ok);
}

TEST_CASE("conformance flags a send from ready") {
    std::vector<ProcessAction> log = {ProcessAction::send(n1, Tag::Query)};
    auto r = conformance_check(log);
    CHECK_FALSE(r.ok);
    CHECK(r.violation_index == 0);
    CHECK_FALSE(r.divergence);
}

TEST_CASE("conformance tracks both branches of the anonymous return") {
    // Working(_) -tau-> may mean "still working" or "returned"; a following
    // receive is only possible on the Ready branch
    std::vector<ProcessAction> log = {
        ProcessAction::recv(anon, Tag::Query),
        ProcessAction::tau(),
        ProcessAction::recv(n1, Tag::Query),
        ProcessAction::send(n1, Tag::Response),
    };
    CHECK(conformance_check(log).ok);
}

TEST_CASE("conformance flags divergence past the bound") {
    std::vector<ProcessAction> log = {ProcessAction::recv(n1, Tag::Query)};
    for (int i = 0; i < 50; ++i) log.push_back(ProcessAction::tau());
    auto r = conformance_check(log, AbstractSrpcState::ready(), 10);
    CHECK_FALSE(r.ok);
    CHECK(r.divergence);

    CHECK(conformance_check(log, AbstractSrpcState::ready(), 100).ok);
}
