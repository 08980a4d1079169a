#pragma once

#include "polp/error.hpp"

#include <cctype>
#include <charconv>
#include <string>
#include <string_view>
#include <vector>

namespace polp {

enum class Tok {
    Ident,     // lowercase-initial name
    Variable,  // uppercase- or underscore-initial name
    Number,
    ColonColon,
    ColonDash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Plus,
    Minus,
    Star,
    Less,
    LessEq,
    Greater,
    GreaterEq,
    End,
};

struct Token {
    Tok kind = Tok::End;
    std::string text;
    double number = 0.0;
    std::size_t line = 1;
    std::size_t column = 1;
};

struct Directive {
    std::string text;
    std::size_t line = 1;
};

/// Splits program or expression text into tokens. `%` starts a line comment;
/// comments of the form `% polp: ...` are collected as directives.
class Lexer {
public:
    explicit Lexer(std::string_view text, std::size_t first_line = 1, std::size_t first_column = 1)
        : text_(text), line_(first_line), column_(first_column) {}

    std::vector<Token> tokenize() {
        std::vector<Token> out;
        while (true) {
            skip_space_and_comments();
            Token t;
            t.line = line_;
            t.column = column_;
            if (pos_ >= text_.size()) {
                t.kind = Tok::End;
                out.push_back(std::move(t));
                return out;
            }
            char c = text_[pos_];
            if (std::islower(static_cast<unsigned char>(c))) {
                t.kind = Tok::Ident;
                t.text = take_name();
            } else if (std::isupper(static_cast<unsigned char>(c)) || c == '_') {
                t.kind = Tok::Variable;
                t.text = take_name();
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                take_number(t);
            } else {
                take_punct(t);
            }
            out.push_back(std::move(t));
        }
    }

    const std::vector<Directive>& directives() const { return directives_; }

private:
    char peek(std::size_t ahead = 0) const {
        return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
    }

    void advance() {
        if (text_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    void skip_space_and_comments() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else if (c == '%') {
                std::size_t line = line_;
                std::size_t start = pos_ + 1;
                while (pos_ < text_.size() && text_[pos_] != '\n') advance();
                record_directive(text_.substr(start, pos_ - start), line);
            } else {
                return;
            }
        }
    }

    void record_directive(std::string_view body, std::size_t line) {
        std::size_t i = 0;
        while (i < body.size() && body[i] == ' ') ++i;
        constexpr std::string_view tag = "polp:";
        if (body.substr(i, tag.size()) != tag) return;
        body.remove_prefix(i + tag.size());
        while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front()))) body.remove_prefix(1);
        while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
        directives_.push_back({std::string(body), line});
    }

    std::string take_name() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            advance();
        return std::string(text_.substr(start, pos_ - start));
    }

    void take_number(Token& t) {
        std::size_t start = pos_;
        auto digits = [&] {
            while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
        };
        digits();
        // A '.' is part of the number only when a digit follows; otherwise it
        // terminates the clause.
        if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
            advance();
            digits();
        }
        if ((peek() == 'e' || peek() == 'E') &&
            (std::isdigit(static_cast<unsigned char>(peek(1))) ||
             ((peek(1) == '+' || peek(1) == '-') && std::isdigit(static_cast<unsigned char>(peek(2)))))) {
            advance();
            if (peek() == '+' || peek() == '-') advance();
            digits();
        }
        t.kind = Tok::Number;
        t.text = std::string(text_.substr(start, pos_ - start));
        auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
        if (res.ec != std::errc{}) throw ParseError(t.line, t.column, "invalid number '" + t.text + "'");
    }

    void take_punct(Token& t) {
        char c = peek();
        char n = peek(1);
        auto two = [&](Tok k) {
            t.kind = k;
            t.text = std::string(text_.substr(pos_, 2));
            advance();
            advance();
        };
        auto one = [&](Tok k) {
            t.kind = k;
            t.text = std::string(1, c);
            advance();
        };
        switch (c) {
        case ':':
            if (n == ':') return two(Tok::ColonColon);
            if (n == '-') return two(Tok::ColonDash);
            break;
        case '<':
            if (n == '=') return two(Tok::LessEq);
            return one(Tok::Less);
        case '>':
            if (n == '=') return two(Tok::GreaterEq);
            return one(Tok::Greater);
        case '(': return one(Tok::LParen);
        case ')': return one(Tok::RParen);
        case '[': return one(Tok::LBracket);
        case ']': return one(Tok::RBracket);
        case ',': return one(Tok::Comma);
        case '.': return one(Tok::Dot);
        case '+': return one(Tok::Plus);
        case '-': return one(Tok::Minus);
        case '*': return one(Tok::Star);
        default: break;
        }
        throw ParseError(line_, column_, std::string("unexpected character '") + c + "'");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_;
    std::size_t column_;
    std::vector<Directive> directives_;
};

inline const char* describe(Tok k) {
    switch (k) {
    case Tok::Ident: return "name";
    case Tok::Variable: return "variable";
    case Tok::Number: return "number";
    case Tok::ColonColon: return "'::'";
    case Tok::ColonDash: return "':-'";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::LBracket: return "'['";
    case Tok::RBracket: return "']'";
    case Tok::Comma: return "','";
    case Tok::Dot: return "'.'";
    case Tok::Plus: return "'+'";
    case Tok::Minus: return "'-'";
    case Tok::Star: return "'*'";
    case Tok::Less: return "'<'";
    case Tok::LessEq: return "'<='";
    case Tok::Greater: return "'>'";
    case Tok::GreaterEq: return "'>='";
    case Tok::End: return "end of input";
    }
    return "token";
}

/// Cursor over a token vector with expectation helpers shared by the program
/// and expression parsers.
class TokenStream {
public:
    explicit TokenStream(std::vector<Token> toks) : toks_(std::move(toks)) {}

    const Token& peek(std::size_t ahead = 0) const {
        std::size_t i = pos_ + ahead;
        return i < toks_.size() ? toks_[i] : toks_.back();
    }
    bool at(Tok k) const { return peek().kind == k; }
    bool at_end() const { return at(Tok::End); }

    const Token& next() {
        const Token& t = toks_[pos_];
        if (pos_ + 1 < toks_.size()) ++pos_;
        return t;
    }

    bool accept(Tok k) {
        if (!at(k)) return false;
        next();
        return true;
    }

    const Token& expect(Tok k, const char* context) {
        if (!at(k)) {
            const Token& t = peek();
            throw ParseError(t.line, t.column,
                             std::string("expected ") + describe(k) + " " + context + ", found " +
                                 (t.kind == Tok::End ? std::string("end of input") : "'" + t.text + "'"));
        }
        return next();
    }

    [[noreturn]] void fail(const std::string& message) const {
        const Token& t = peek();
        throw ParseError(t.line, t.column, message);
    }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

} // namespace polp
