#include "flowguard/policy.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <map>
#include <optional>
#include <sstream>

namespace flowguard::policy {

ParseError::ParseError(int line, int column, std::string message)
    : line_(line), column_(column) {
    std::ostringstream out;
    out << "line " << line << ", col " << column << ": " << message;
    formatted_ = out.str();
}

namespace {

enum class Tok {
    ident,
    number,
    lparen,
    rparen,
    lt,
    le,
    gt,
    ge,
    plus,
    minus,
    dot,
    comma,
    colon,
    andand,
    end
};

struct Token {
    Tok kind = Tok::end;
    std::string text;
    std::int64_t value = 0;
    bool hex = false;
    int line = 1;
    int col = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return current_; }

    Token take() {
        Token t = current_;
        advance();
        return t;
    }

    [[noreturn]] void fail(const Token& at, const std::string& message) const {
        throw ParseError(at.line, at.col, message);
    }

private:
    void advance() {
        skip_blank();
        current_ = Token{};
        current_.line = line_;
        current_.col = col_;
        if (pos_ >= src_.size()) {
            current_.kind = Tok::end;
            current_.text = "<end of input>";
            return;
        }
        char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                    src_[pos_] == '_'))
                bump();
            current_.kind = Tok::ident;
            current_.text = std::string(src_.substr(start, pos_ - start));
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            lex_number();
            return;
        }
        switch (c) {
            case '(': single(Tok::lparen, "("); return;
            case ')': single(Tok::rparen, ")"); return;
            case '+': single(Tok::plus, "+"); return;
            case '-': single(Tok::minus, "-"); return;
            case '.': single(Tok::dot, "."); return;
            case ',': single(Tok::comma, ","); return;
            case ':': single(Tok::colon, ":"); return;
            case '<':
                bump();
                if (pos_ < src_.size() && src_[pos_] == '=') {
                    bump();
                    current_.kind = Tok::le;
                    current_.text = "<=";
                } else {
                    current_.kind = Tok::lt;
                    current_.text = "<";
                }
                return;
            case '>':
                bump();
                if (pos_ < src_.size() && src_[pos_] == '=') {
                    bump();
                    current_.kind = Tok::ge;
                    current_.text = ">=";
                } else {
                    current_.kind = Tok::gt;
                    current_.text = ">";
                }
                return;
            case '&':
                bump();
                if (pos_ < src_.size() && src_[pos_] == '&') {
                    bump();
                    current_.kind = Tok::andand;
                    current_.text = "&&";
                    return;
                }
                throw ParseError(current_.line, current_.col,
                                 "stray '&' (did you mean '&&'?)");
            default:
                throw ParseError(current_.line, current_.col,
                                 std::string("unexpected character '") + c +
                                     "'");
        }
    }

    void lex_number() {
        std::size_t start = pos_;
        bool hex = false;
        if (src_[pos_] == '0' && pos_ + 1 < src_.size() &&
            (src_[pos_ + 1] == 'x' || src_[pos_ + 1] == 'X')) {
            hex = true;
            bump();
            bump();
            if (pos_ >= src_.size() ||
                !std::isxdigit(static_cast<unsigned char>(src_[pos_])))
                throw ParseError(current_.line, current_.col,
                                 "hex literal needs at least one digit");
            while (pos_ < src_.size() &&
                   std::isxdigit(static_cast<unsigned char>(src_[pos_])))
                bump();
        } else {
            while (pos_ < src_.size() &&
                   std::isdigit(static_cast<unsigned char>(src_[pos_])))
                bump();
        }
        current_.kind = Tok::number;
        current_.text = std::string(src_.substr(start, pos_ - start));
        current_.hex = hex;
        current_.value = std::stoll(current_.text, nullptr, hex ? 16 : 10);
    }

    void single(Tok kind, const char* text) {
        bump();
        current_.kind = kind;
        current_.text = text;
    }

    void skip_blank() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') bump();
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                bump();
            } else {
                break;
            }
        }
    }

    void bump() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
    Token current_;
};

class Parser {
public:
    explicit Parser(std::string_view src) : lex_(src) {}

    Policy parse() {
        Policy policy;
        policy.rules.push_back(rule());
        while (lex_.peek().kind == Tok::andand) {
            lex_.take();
            policy.rules.push_back(rule());
        }
        expect(Tok::end, "end of policy");
        return policy;
    }

private:
    Token expect(Tok kind, const char* what) {
        if (lex_.peek().kind != kind)
            lex_.fail(lex_.peek(), std::string("expected ") + what + ", got '" +
                                       lex_.peek().text + "'");
        return lex_.take();
    }

    // A rule is a parenthesised chain of bindings followed by one predicate,
    // all separated by '.'.  The lookahead that separates the two: a binding
    // is IDENT ':' while a predicate never is.
    Rule rule() {
        Rule r;
        expect(Tok::lparen, "'('");
        std::map<std::string, Token> bound;
        while (true) {
            if (lex_.peek().kind == Tok::ident) {
                Token name = lex_.take();
                if (lex_.peek().kind == Tok::colon) {
                    lex_.take();
                    Binding b = binding_tail(name);
                    if (bound.count(b.var))
                        lex_.fail(name, "variable '" + b.var +
                                            "' bound more than once");
                    bound.emplace(b.var, name);
                    r.bindings.push_back(std::move(b));
                    expect(Tok::dot, "'.' after binding");
                    continue;
                }
                r.predicate = predicate(name, bound);
            } else {
                if (r.bindings.empty())
                    lex_.fail(lex_.peek(), "rule must start with a binding");
                r.predicate = predicate(std::nullopt, bound);
            }
            break;
        }
        expect(Tok::rparen, "')'");
        return r;
    }

    Binding binding_tail(const Token& name) {
        Binding b;
        b.var = name.text;
        expect(Tok::lt, "'<' opening the frame tuple");
        Token id = expect(Tok::number, "frame id");
        b.frame_id = static_cast<int>(id.value);
        b.hex = id.hex;
        expect(Tok::comma, "','");
        Token h = expect(Tok::number, "window length");
        b.window_ms = h.value;
        expect(Tok::gt, "'>' closing the frame tuple");
        return b;
    }

    // first: an IDENT already consumed by the caller's lookahead, if any.
    Predicate predicate(std::optional<Token> first,
                        const std::map<std::string, Token>& bound) {
        Predicate p;
        expr(p.terms, 1, std::move(first), bound);
        switch (lex_.peek().kind) {
            case Tok::lt: p.rel = Rel::lt; break;
            case Tok::le: p.rel = Rel::le; break;
            case Tok::gt: p.rel = Rel::gt; break;
            case Tok::ge: p.rel = Rel::ge; break;
            default:
                lex_.fail(lex_.peek(), "expected a comparison, got '" +
                                           lex_.peek().text + "'");
        }
        lex_.take();
        bool negative = false;
        if (lex_.peek().kind == Tok::minus) {
            lex_.take();
            negative = true;
        }
        Token t = expect(Tok::number, "threshold");
        p.threshold = negative ? -t.value : t.value;
        return p;
    }

    void expr(std::vector<TermRef>& out, int sign, std::optional<Token> first,
              const std::map<std::string, Token>& bound) {
        term(out, sign, std::move(first), bound);
        while (lex_.peek().kind == Tok::plus ||
               lex_.peek().kind == Tok::minus) {
            int next = lex_.take().kind == Tok::plus ? sign : -sign;
            term(out, next, std::nullopt, bound);
        }
    }

    void term(std::vector<TermRef>& out, int sign, std::optional<Token> first,
              const std::map<std::string, Token>& bound) {
        if (first) {
            use_var(out, sign, *first, bound);
            return;
        }
        if (lex_.peek().kind == Tok::ident) {
            use_var(out, sign, lex_.take(), bound);
            return;
        }
        if (lex_.peek().kind == Tok::lparen) {
            lex_.take();
            expr(out, sign, std::nullopt, bound);
            expect(Tok::rparen, "')'");
            return;
        }
        lex_.fail(lex_.peek(),
                  "expected a variable or '(', got '" + lex_.peek().text + "'");
    }

    void use_var(std::vector<TermRef>& out, int sign, const Token& name,
                 const std::map<std::string, Token>& bound) {
        if (!bound.count(name.text))
            lex_.fail(name, "variable '" + name.text + "' is not bound");
        out.push_back({sign, name.text});
    }

    Lexer lex_;
};

const char* rel_text(Rel r) {
    switch (r) {
        case Rel::lt: return "<";
        case Rel::le: return "<=";
        case Rel::gt: return ">";
        case Rel::ge: return ">=";
    }
    return "?";
}

}  // namespace

Policy parse_policy(std::string_view text) { return Parser(text).parse(); }

std::string render_policy(const Policy& policy) {
    std::ostringstream out;
    for (std::size_t i = 0; i < policy.rules.size(); ++i) {
        if (i) out << " && ";
        const Rule& r = policy.rules[i];
        out << '(';
        for (const auto& b : r.bindings) {
            out << b.var << ":<";
            if (b.hex)
                out << "0x" << std::uppercase << std::hex << b.frame_id
                    << std::nouppercase << std::dec;
            else
                out << b.frame_id;
            out << ',' << b.window_ms << "> . ";
        }
        const Predicate& p = r.predicate;
        // The grammar guarantees a positive leading term.
        assert(p.terms.empty() || p.terms[0].sign > 0);
        for (std::size_t t = 0; t < p.terms.size(); ++t) {
            if (t > 0) out << (p.terms[t].sign > 0 ? " + " : " - ");
            out << p.terms[t].var;
        }
        out << ' ' << rel_text(p.rel) << ' ' << p.threshold << ')';
    }
    return out.str();
}

std::int64_t count_in_window(const EventSequence& events, int frame_id,
                             std::int64_t start, std::int64_t h) {
    std::int64_t n = 0;
    for (const auto& e : events)
        if (e.frame_id == frame_id && e.t_ms >= start && e.t_ms < start + h)
            ++n;
    return n;
}

int evaluate_rule(const Rule& rule, const EventSequence& events,
                  std::int64_t window_start) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& b : rule.bindings) {
        std::int64_t anchor = window_start;
        for (const auto& e : events) {
            if (e.frame_id == b.frame_id && e.t_ms >= window_start) {
                anchor = e.t_ms;
                break;
            }
        }
        counts[b.var] = count_in_window(events, b.frame_id, anchor, b.window_ms);
    }
    std::int64_t value = 0;
    for (const auto& t : rule.predicate.terms)
        value += t.sign * counts.at(t.var);
    bool normal = false;
    switch (rule.predicate.rel) {
        case Rel::lt: normal = value < rule.predicate.threshold; break;
        case Rel::le: normal = value <= rule.predicate.threshold; break;
        case Rel::gt: normal = value > rule.predicate.threshold; break;
        case Rel::ge: normal = value >= rule.predicate.threshold; break;
    }
    return normal ? 0 : 1;
}

int evaluate_policy(const Policy& policy, const EventSequence& events,
                    std::int64_t window_start) {
    for (const auto& r : policy.rules)
        if (evaluate_rule(r, events, window_start)) return 1;
    return 0;
}

}  // namespace flowguard::policy
