#pragma once

#include <cctype>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "srpc/network.hpp"

namespace srpc {

struct ParseError : std::runtime_error {
    int line;
    int col;
    ParseError(int l, int c, const std::string& msg)
        : std::runtime_error("parse error at " + std::to_string(l) + ":" + std::to_string(c) +
                             ": " + msg),
          line(l), col(c) {}
};

struct Session {
    std::string label;
    Name target;
    Program program;
};

inline bool operator==(const Session& a, const Session& b) {
    return a.label == b.label && a.target == b.target && a.program == b.program;
}

// Parsed scenario: declared names in order, a role per name, and the ordered
// sessions injected by the hidden initiator.
struct Scenario {
    std::string name = "scenario";
    NameTablePtr names;
    std::uint32_t declared = 0; // user-declared names; the initiator comes after
    std::vector<Role> roles;    // indexed by declared name
    std::vector<Session> sessions;

    Name initiator() const { return Name(declared); }
};

inline bool operator==(const Scenario& a, const Scenario& b) {
    if (a.declared != b.declared || a.sessions.size() != b.sessions.size()) return false;
    for (std::uint32_t i = 0; i < a.declared; ++i) {
        if (a.names->label(Name(i)) != b.names->label(Name(i))) return false;
        if (a.roles[i].kind != b.roles[i].kind) return false;
        if (a.roles[i].is_proxy() && a.roles[i].proxy_target != b.roles[i].proxy_target)
            return false;
    }
    for (std::size_t i = 0; i < a.sessions.size(); ++i)
        if (!(a.sessions[i] == b.sessions[i])) return false;
    return true;
}

namespace detail {

struct Token {
    enum class Kind { Ident, Int, Punct, End };
    Kind kind;
    std::string text;
    long value = 0;
    int line = 1;
    int col = 1;
};

class Lexer {
  public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }

    Token next() {
        Token t = tok_;
        advance();
        return t;
    }

  private:
    void advance() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
            } else if (c == '\n') {
                ++line_;
                col_ = 1;
                ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++col_;
                ++pos_;
            } else {
                break;
            }
        }
        tok_.line = line_;
        tok_.col = col_;
        if (pos_ >= src_.size()) {
            tok_ = {Token::Kind::End, "", 0, line_, col_};
            return;
        }
        char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                take();
            tok_ = {Token::Kind::Ident, std::string(src_.substr(start, pos_ - start)), 0, tok_.line,
                    tok_.col};
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                take();
            std::string text(src_.substr(start, pos_ - start));
            tok_ = {Token::Kind::Int, text, std::stol(text), tok_.line, tok_.col};
            return;
        }
        if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
            take();
            take();
            tok_ = {Token::Kind::Punct, "->", 0, tok_.line, tok_.col};
            return;
        }
        take();
        tok_ = {Token::Kind::Punct, std::string(1, c), 0, tok_.line, tok_.col};
    }

    void take() {
        ++pos_;
        ++col_;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
    Token tok_;
};

inline bool is_keyword(const std::string& s) {
    return s == "services" || s == "proxy" || s == "endpoint" || s == "session" ||
           s == "query" || s == "delay" || s == "call" || s == "cast";
}

class ScenarioParser {
  public:
    explicit ScenarioParser(std::string_view src) : lex_(src) {}

    Scenario parse() {
        expect_ident("services");
        expect_punct(":");
        if (lex_.peek().kind != Token::Kind::Ident || is_keyword(lex_.peek().text))
            fail("expected at least one service name after 'services:'");
        while (lex_.peek().kind == Token::Kind::Ident && !is_keyword(lex_.peek().text))
            declare(lex_.next());
        scn_.declared = static_cast<std::uint32_t>(table_->size());
        scn_.roles.assign(scn_.declared, Role::endpoint());
        table_->intern("_init");
        while (lex_.peek().kind == Token::Kind::Ident &&
               (lex_.peek().text == "proxy" || lex_.peek().text == "endpoint"))
            parse_decl();
        while (lex_.peek().kind == Token::Kind::Ident && lex_.peek().text == "session")
            parse_session();
        if (lex_.peek().kind != Token::Kind::End) fail("unexpected trailing input");
        if (scn_.sessions.empty()) fail("scenario has no sessions");
        scn_.names = table_;
        return scn_;
    }

  private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(lex_.peek().line, lex_.peek().col, msg);
    }

    void declare(const Token& t) {
        if (table_->contains(t.text))
            throw ParseError(t.line, t.col, "duplicate service name '" + t.text + "'");
        table_->intern(t.text);
    }

    Name resolve(const Token& t) const {
        if (!table_->contains(t.text) || t.text == "_init")
            throw ParseError(t.line, t.col, "undeclared name '" + t.text + "'");
        return table_->lookup(t.text);
    }

    Token expect_ident(const std::string& kw) {
        Token t = lex_.next();
        if (t.kind != Token::Kind::Ident || t.text != kw)
            throw ParseError(t.line, t.col, "expected '" + kw + "'");
        return t;
    }

    void expect_punct(const std::string& p) {
        Token t = lex_.next();
        if (t.kind != Token::Kind::Punct || t.text != p)
            throw ParseError(t.line, t.col, "expected '" + p + "'");
    }

    Token name_token() {
        Token t = lex_.next();
        if (t.kind != Token::Kind::Ident || is_keyword(t.text))
            throw ParseError(t.line, t.col, "expected a name");
        return t;
    }

    void parse_decl() {
        Token kw = lex_.next();
        Token subject = name_token();
        Name n = resolve(subject);
        if (declared_roles_.count(n.index()))
            throw ParseError(subject.line, subject.col,
                             "duplicate declaration for '" + subject.text + "'");
        declared_roles_.insert(n.index());
        if (kw.text == "proxy") {
            expect_punct("->");
            Name target = resolve(name_token());
            scn_.roles[n.index()] = Role::proxy(target);
        } else {
            scn_.roles[n.index()] = Role::endpoint();
        }
    }

    void parse_session() {
        expect_ident("session");
        Token label = lex_.next();
        if (label.kind != Token::Kind::Ident)
            throw ParseError(label.line, label.col, "expected a session label");
        for (const auto& s : scn_.sessions)
            if (s.label == label.text)
                throw ParseError(label.line, label.col, "duplicate session '" + label.text + "'");
        expect_punct(":");
        expect_ident("query");
        Name target = resolve(name_token());
        scn_.sessions.push_back({label.text, target, parse_program()});
    }

    Program parse_program() {
        expect_punct("[");
        Program prog;
        if (lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == "]") {
            lex_.next();
            return prog;
        }
        while (true) {
            prog.push_back(parse_instr());
            Token t = lex_.next();
            if (t.kind == Token::Kind::Punct && t.text == "]") break;
            if (!(t.kind == Token::Kind::Punct && t.text == ","))
                throw ParseError(t.line, t.col, "expected ',' or ']'");
        }
        return prog;
    }

    Instruction parse_instr() {
        Token t = lex_.next();
        if (t.kind != Token::Kind::Ident)
            throw ParseError(t.line, t.col, "expected an instruction");
        if (t.text == "delay") {
            Token n = lex_.next();
            if (n.kind != Token::Kind::Int)
                throw ParseError(n.line, n.col, "expected a step count");
            return Instruction::delay(static_cast<int>(n.value));
        }
        if (t.text == "call" || t.text == "cast") {
            Name target = resolve(name_token());
            Program body = parse_program();
            return t.text == "call" ? Instruction::call(target, std::move(body))
                                    : Instruction::cast_to(target, std::move(body));
        }
        throw ParseError(t.line, t.col, "unknown instruction '" + t.text + "'");
    }

    Lexer lex_;
    Scenario scn_;
    std::shared_ptr<NameTable> table_ = std::make_shared<NameTable>();
    std::set<std::uint32_t> declared_roles_;
};

} // namespace detail

inline Scenario parse_scenario(std::string_view text, std::string name = "scenario") {
    detail::ScenarioParser p(text);
    Scenario s = p.parse();
    s.name = std::move(name);
    return s;
}

namespace detail {
inline void render_program(std::ostringstream& os, const NameTable& t, const Program& p) {
    os << '[';
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) os << ", ";
        const Instruction& ins = p[i];
        switch (ins.kind) {
            case Instruction::Kind::Delay: os << "delay " << ins.steps; break;
            case Instruction::Kind::Call:
                os << "call " << t.label(ins.target) << ' ';
                render_program(os, t, ins.body);
                break;
            case Instruction::Kind::CastTo:
                os << "cast " << t.label(ins.target) << ' ';
                render_program(os, t, ins.body);
                break;
        }
    }
    os << ']';
}
} // namespace detail

inline std::string render_scenario(const Scenario& s) {
    std::ostringstream os;
    os << "services:";
    for (std::uint32_t i = 0; i < s.declared; ++i) os << ' ' << s.names->label(Name(i));
    os << '\n';
    for (std::uint32_t i = 0; i < s.declared; ++i) {
        if (s.roles[i].is_proxy())
            os << "proxy " << s.names->label(Name(i)) << " -> "
               << s.names->label(s.roles[i].proxy_target) << '\n';
        else
            os << "endpoint " << s.names->label(Name(i)) << '\n';
    }
    for (const auto& sess : s.sessions) {
        os << "session " << sess.label << ": query " << s.names->label(sess.target) << ' ';
        detail::render_program(os, *s.names, sess.program);
        os << '\n';
    }
    return os.str();
}

// Builds the initial network: every declared service idle, plus the hidden
// initiator already busy casting the session programs to their targets.
inline Network build_network(const Scenario& s, long divergence_bound = 1000000) {
    Network net;
    net.names = s.names;
    for (std::uint32_t i = 0; i < s.declared; ++i) {
        Service sv = make_service(idle_process(s.roles[i]));
        sv.divergence_bound = divergence_bound;
        net.services.push_back(std::move(sv));
    }
    Program init;
    for (const auto& sess : s.sessions) {
        Instruction cast = Instruction::cast_to(sess.target, sess.program);
        cast.session = sess.label;
        init.push_back(std::move(cast));
    }
    Service sv = make_service(scripted_process(std::move(init), "_init"));
    sv.divergence_bound = divergence_bound;
    net.services.push_back(std::move(sv));
    return net;
}

} // namespace srpc
