#pragma once

#include <cctype>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"

namespace specmoment {

// Arithmetic expressions in one variable for scalar prior curves:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := unary ('^' factor)?
//   unary  := '-' unary | primary
//   primary:= number | 'theta' | 'pi' | ('cos'|'sin') '(' expr ')' | '(' expr ')'
class Expr {
 public:
  static Expr parse(const std::string& text) {
    Expr e;
    Parser p{text, 0, e.nodes_};
    e.root_ = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size())
      throw Error(ErrorCode::InvalidInput,
                  "expression: unexpected input at position " + std::to_string(p.pos));
    return e;
  }

  double eval(double theta) const { return eval_node(root_, theta); }

 private:
  struct Node {
    enum Kind { Const, Theta, Add, Sub, Mul, Div, Pow, Neg, Cos, Sin } kind;
    double value = 0.0;
    int a = -1,
        b = -1;
  };

  std::vector<Node> nodes_;
  int root_ = -1;

  double eval_node(int i, double th) const {
    const Node& nd = nodes_[i];
    switch (nd.kind) {
      case Node::Const: return nd.value;
      case Node::Theta: return th;
      case Node::Add: return eval_node(nd.a, th) + eval_node(nd.b, th);
      case Node::Sub: return eval_node(nd.a, th) - eval_node(nd.b, th);
      case Node::Mul: return eval_node(nd.a, th) * eval_node(nd.b, th);
      case Node::Div: return eval_node(nd.a, th) / eval_node(nd.b, th);
      case Node::Pow: return std::pow(eval_node(nd.a, th), eval_node(nd.b, th));
      case Node::Neg: return -eval_node(nd.a, th);
      case Node::Cos: return std::cos(eval_node(nd.a, th));
      case Node::Sin: return std::sin(eval_node(nd.a, th));
    }
    return 0.0;
  }

  struct Parser {
    const std::string& s;
    size_t pos;
    std::vector<Node>& nodes;

    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool eat(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    bool eat_word(const char* w) {
      skip_ws();
      const size_t len = std::strlen(w);
      if (s.compare(pos, len, w) != 0) return false;
      const size_t end = pos + len;
      if (end < s.size() &&
          (std::isalnum(static_cast<unsigned char>(s[end])) || s[end] == '_'))
        return false;
      pos = end;
      return true;
    }

    int add(Node nd) {
      nodes.push_back(nd);
      return static_cast<int>(nodes.size()) - 1;
    }

    int parse_expr() {
      int lhs = parse_term();
      for (;;) {
        if (eat('+'))
          lhs = add({Node::Add, 0, lhs, parse_term()});
        else if (eat('-'))
          lhs = add({Node::Sub, 0, lhs, parse_term()});
        else
          return lhs;
      }
    }

    int parse_term() {
      int lhs = parse_factor();
      for (;;) {
        if (eat('*'))
          lhs = add({Node::Mul, 0, lhs, parse_factor()});
        else if (eat('/'))
          lhs = add({Node::Div, 0, lhs, parse_factor()});
        else
          return lhs;
      }
    }

    int parse_factor() {
      const int base = parse_unary();
      if (eat('^')) return add({Node::Pow, 0, base, parse_factor()});
      return base;
    }

    int parse_unary() {
      if (eat('-')) return add({Node::Neg, 0, parse_unary(), -1});
      return parse_primary();
    }

    int parse_primary() {
      skip_ws();
      if (pos >= s.size())
        throw Error(ErrorCode::InvalidInput, "expression: unexpected end of input");
      if (eat_word("theta")) return add({Node::Theta, 0, -1, -1});
      if (eat_word("pi")) return add({Node::Const, std::numbers::pi, -1, -1});
      if (eat_word("cos")) return parse_call(Node::Cos);
      if (eat_word("sin")) return parse_call(Node::Sin);
      if (eat('(')) {
        const int inner = parse_expr();
        if (!eat(')'))
          throw Error(ErrorCode::InvalidInput, "expression: missing ')'");
        return inner;
      }
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        size_t consumed = 0;
        double v;
        try {
          v = std::stod(s.substr(pos), &consumed);
        } catch (const std::exception&) {
          throw Error(ErrorCode::InvalidInput,
                      "expression: bad number at position " + std::to_string(pos));
        }
        pos += consumed;
        return add({Node::Const, v, -1, -1});
      }
      throw Error(ErrorCode::InvalidInput,
                  "expression: unexpected character '" + std::string(1, c) + "' at position " +
                      std::to_string(pos));
    }

    int parse_call(Node::Kind kind) {
      if (!eat('('))
        throw Error(ErrorCode::InvalidInput, "expression: function call needs '('");
      const int arg = parse_expr();
      if (!eat(')'))
        throw Error(ErrorCode::InvalidInput, "expression: missing ')'");
      return add({kind, 0, arg, -1});
    }
  };
};

}  // namespace specmoment
