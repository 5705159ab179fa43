#include "aeon/parser.hpp"
#include "aeon/error.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace aeon {

namespace {

enum class Tok { ident, integer, punct, end };

struct Token {
    Tok kind = Tok::end;
    std::string text;
    std::int64_t number = 0;
    int line = 1;
    int col = 1;
};

std::vector<Token> lex(std::string_view src)
{
    std::vector<Token> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
            ++i;
        }
    };
    static const char *two[] = {":=", "->", "==", "!=", "<=", ">=", "&&", "||"};
    while (i < src.size()) {
        char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n')
                advance(1);
            continue;
        }
        Token t;
        t.line = line;
        t.col = col;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
                ++j;
            t.kind = Tok::ident;
            t.text = std::string(src.substr(i, j - i));
            advance(j - i);
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j])))
                ++j;
            t.kind = Tok::integer;
            t.text = std::string(src.substr(i, j - i));
            try {
                t.number = std::stoll(t.text);
            } catch (const std::out_of_range &) {
                throw SyntaxError(line, col, "integer literal out of range");
            }
            advance(j - i);
        } else {
            t.kind = Tok::punct;
            bool matched = false;
            if (i + 1 < src.size()) {
                for (const char *op : two) {
                    if (src[i] == op[0] && src[i + 1] == op[1]) {
                        t.text = op;
                        matched = true;
                        break;
                    }
                }
            }
            if (!matched) {
                if (std::string_view("{}()[];,.:=<>+-*/%!@#").find(c) == std::string_view::npos)
                    throw SyntaxError(line, col, std::string("unexpected character '") + c + "'");
                t.text = std::string(1, c);
            }
            advance(t.text.size());
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.kind = Tok::end;
    end.line = line;
    end.col = col;
    out.push_back(end);
    return out;
}

struct ParsedExpr {
    ExprPtr expr;
    std::optional<CallSpec> call; // set when the expression is a bare call
    SourceLoc loc;
};

class Parser {
public:
    Parser(std::vector<Token> toks, std::string name) : toks_(std::move(toks)) { prog_.source_name = std::move(name); }

    Program run()
    {
        while (!at_end()) {
            if (accept_kw("class"))
                parse_class();
            else if (accept_kw("topology"))
                parse_topology();
            else if (accept_kw("main"))
                parse_main();
            else
                fail("expected 'class', 'topology' or 'main'");
        }
        return std::move(prog_);
    }

private:
    // token helpers
    const Token &peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    bool at_end() const { return peek().kind == Tok::end; }
    SourceLoc loc() const { return {peek().line, peek().col}; }
    [[noreturn]] void fail(const std::string &expected) const
    {
        const Token &t = peek();
        std::string got = t.kind == Tok::end ? "end of file" : "'" + t.text + "'";
        throw SyntaxError(t.line, t.col, "expected " + expected + ", got " + got);
    }
    bool is_punct(const char *p, std::size_t k = 0) const
    {
        return peek(k).kind == Tok::punct && peek(k).text == p;
    }
    bool is_kw(const char *kw, std::size_t k = 0) const { return peek(k).kind == Tok::ident && peek(k).text == kw; }
    bool accept(const char *p)
    {
        if (is_punct(p)) {
            ++pos_;
            return true;
        }
        return false;
    }
    bool accept_kw(const char *kw)
    {
        if (is_kw(kw)) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(const char *p)
    {
        if (!accept(p))
            fail(std::string("'") + p + "'");
    }
    void expect_kw(const char *kw)
    {
        if (!accept_kw(kw))
            fail(std::string("'") + kw + "'");
    }
    std::string ident(const char *what = "identifier")
    {
        if (peek().kind != Tok::ident)
            fail(what);
        return toks_[pos_++].text;
    }
    std::int64_t integer()
    {
        bool neg = accept("-");
        if (peek().kind != Tok::integer)
            fail("integer");
        std::int64_t v = toks_[pos_++].number;
        return neg ? -v : v;
    }

    // declarations
    SemType parse_type()
    {
        if (accept_kw("int"))
            return SemType{SemType::Int, {}};
        if (accept_kw("bool"))
            return SemType{SemType::Bool, {}};
        if (accept_kw("unit"))
            return SemType{SemType::Unit, {}};
        if (accept_kw("record"))
            return SemType{SemType::Record, {}};
        if (accept_kw("ref"))
            return SemType::context(ident("class name"));
        fail("type");
    }

    Value parse_literal()
    {
        if (peek().kind == Tok::integer || is_punct("-"))
            return Value(integer());
        if (accept_kw("true"))
            return Value(true);
        if (accept_kw("false"))
            return Value(false);
        if (accept_kw("unit"))
            return Value(Unit{});
        if (accept("#"))
            return Value(ContextId{ident("context id")});
        if (accept("{")) {
            auto r = std::make_shared<Record>();
            if (!is_punct("}")) {
                do {
                    std::string k = ident("field name");
                    expect(":");
                    r->fields[k] = parse_literal();
                } while (accept(","));
            }
            expect("}");
            return Value(RecordPtr(std::move(r)));
        }
        fail("literal");
    }

    void parse_class()
    {
        SourceLoc at = loc();
        std::string name = ident("class name");
        if (prog_.find_class(name))
            throw SyntaxError(at.line, at.col, "duplicate class " + name);
        ContextClassDecl decl;
        decl.name = name;
        ClassInfo info;
        info.loc = at;
        expect("{");
        while (!accept("}")) {
            if (at_end())
                fail("'}'");
            if (accept_kw("field")) {
                FieldDecl f;
                f.name = ident("field name");
                if (accept(":"))
                    f.type = parse_type();
                Value init = f.type.kind == SemType::Bool ? Value(false) : Value(std::int64_t{0});
                if (f.type.kind == SemType::Context || f.type.kind == SemType::Unit)
                    init = Value(Unit{});
                if (f.type.kind == SemType::Record)
                    init = Value(RecordPtr(std::make_shared<Record>()));
                if (accept("="))
                    init = parse_literal();
                expect(";");
                info.field_defaults[f.name] = init;
                decl.field_types.push_back(std::move(f));
            } else if (accept_kw("owns")) {
                do {
                    info.owns.push_back(ident("class name"));
                } while (accept(","));
                expect(";");
            } else if (accept_kw("nosnapshot")) {
                info.snapshot_skip = true;
                expect(";");
            } else {
                MethodDef m = parse_method(name);
                decl.methods.push_back(m.name);
                auto key = std::make_pair(name, m.name);
                if (prog_.method_table.count(key))
                    throw SyntaxError(m.loc.line, m.loc.col, "duplicate method " + name + "." + m.name);
                prog_.method_table.emplace(key, std::move(m));
            }
        }
        prog_.class_decls.push_back(std::move(decl));
        prog_.class_info[name] = std::move(info);
    }

    MethodDef parse_method(const std::string &cls)
    {
        MethodDef m;
        m.class_name = cls;
        m.loc = loc();
        m.access_mode = accept_kw("ro") ? AccessMode::ro : AccessMode::ex;
        expect_kw("method");
        m.name = ident("method name");
        expect("(");
        if (!is_punct(")")) {
            do {
                Param p;
                p.name = ident("parameter name");
                if (accept(":"))
                    p.type = parse_type();
                m.params.push_back(std::move(p));
            } while (accept(","));
        }
        expect(")");
        if (accept("->")) {
            m.return_type = parse_type();
            m.returns_value = m.return_type.kind != SemType::Unit;
        }
        temp_counter_ = 0;
        returns_value_ = false;
        m.body = parse_block();
        auto ret = make_stmt(Stmt::Return{nullptr}, loc());
        m.body.push_back(ret);
        m.returns_value = m.returns_value || returns_value_;
        return m;
    }

    void parse_topology()
    {
        expect("{");
        while (!accept("}")) {
            if (at_end())
                fail("'}'");
            if (accept_kw("context")) {
                InstanceDecl inst;
                inst.loc = loc();
                inst.id = ContextId{ident("context id")};
                expect(":");
                inst.class_name = ident("class name");
                if (accept("{")) {
                    while (!accept("}")) {
                        std::string f = ident("field name");
                        expect("=");
                        if (peek().kind == Tok::ident && !is_kw("true") && !is_kw("false") && !is_kw("unit"))
                            inst.field_inits[f] = Value(ContextId{ident()});
                        else
                            inst.field_inits[f] = parse_literal();
                        expect(";");
                    }
                }
                accept(";");
                prog_.instances.push_back(std::move(inst));
            } else {
                ContextId parent{ident("context id")};
                expect("->");
                do {
                    prog_.edges.emplace_back(parent, ContextId{ident("context id")});
                } while (accept(","));
                expect(";");
            }
        }
    }

    void parse_main()
    {
        expect("{");
        while (!accept("}")) {
            if (at_end())
                fail("'}'");
            ScriptEntry e;
            e.loc = loc();
            if (accept_kw("event")) {
                e.kind = ScriptEntry::event;
                e.target = ContextId{ident("context id")};
                expect(".");
                e.method = ident("method name");
                expect("(");
                if (!is_punct(")")) {
                    do {
                        if (peek().kind == Tok::ident && !is_kw("true") && !is_kw("false") && !is_kw("unit"))
                            e.args.push_back(Value(ContextId{ident()}));
                        else
                            e.args.push_back(parse_literal());
                    } while (accept(","));
                }
                expect(")");
            } else if (accept_kw("snapshot")) {
                e.kind = ScriptEntry::snapshot;
                e.target = ContextId{ident("context id")};
            } else {
                fail("'event' or 'snapshot'");
            }
            if (accept("@")) {
                expect_kw("tick");
                expect("=");
                e.at_tick = integer();
            }
            expect(";");
            prog_.main_script.push_back(std::move(e));
        }
    }

    // statements
    template <class T>
    StmtPtr make_stmt(T node, SourceLoc at)
    {
        auto s = std::make_shared<Stmt>();
        s->node = std::move(node);
        s->loc = at;
        s->id = ++stmt_counter_;
        return s;
    }

    Block parse_block()
    {
        expect("{");
        Block out;
        while (!accept("}")) {
            if (at_end())
                fail("'}'");
            parse_stmt(out);
        }
        return out;
    }

    void flush(Block &out)
    {
        for (auto &s : hoisted_)
            out.push_back(std::move(s));
        hoisted_.clear();
    }

    void parse_stmt(Block &out)
    {
        SourceLoc at = loc();
        if (accept_kw("skip")) {
            expect(";");
            out.push_back(make_stmt(Stmt::Skip{}, at));
        } else if (accept_kw("return")) {
            ExprPtr v;
            if (!is_punct(";")) {
                v = value_expr();
                returns_value_ = true;
            }
            expect(";");
            flush(out);
            out.push_back(make_stmt(Stmt::Return{v}, at));
        } else if (accept_kw("if")) {
            out.push_back(parse_if(out, at));
        } else if (accept_kw("repeat")) {
            std::int64_t n = integer();
            if (n < 0)
                throw SyntaxError(at.line, at.col, "negative repeat count");
            Block body = parse_block();
            out.push_back(make_stmt(Stmt::Repeat{n, std::move(body)}, at));
        } else if (accept_kw("for")) {
            std::string var = ident("loop variable");
            expect_kw("in");
            expect_kw("children");
            expect("[");
            std::string cls = ident("class name");
            expect("]");
            Block body = parse_block();
            out.push_back(make_stmt(Stmt::ForChildren{var, cls, std::move(body)}, at));
        } else if (accept_kw("async")) {
            CallSpec c = call_expr();
            expect(";");
            flush(out);
            out.push_back(make_stmt(Stmt::AsyncCall{std::move(c)}, at));
        } else if (accept_kw("event")) {
            CallSpec c = call_expr();
            expect(";");
            flush(out);
            out.push_back(make_stmt(Stmt::EventDispatch{std::move(c)}, at));
        } else if (is_kw("add_ownership") || is_kw("remove_ownership")) {
            bool add = peek().text == "add_ownership";
            ++pos_;
            expect("(");
            ExprPtr p = value_expr();
            expect(",");
            ExprPtr c = value_expr();
            expect(")");
            expect(";");
            flush(out);
            if (add)
                out.push_back(make_stmt(Stmt::AddOwnership{p, c}, at));
            else
                out.push_back(make_stmt(Stmt::RemoveOwnership{p, c}, at));
        } else {
            ParsedExpr lhs = parse_expr();
            if (accept(":=")) {
                if (lhs.call)
                    throw SyntaxError(at.line, at.col, "cannot assign to a call");
                ParsedExpr rhs = parse_expr();
                expect(";");
                flush(out);
                if (auto v = std::get_if<Expr::Var>(&lhs.expr->node)) {
                    if (rhs.call)
                        out.push_back(make_stmt(Stmt::SyncCall{v->name, std::move(*rhs.call)}, at));
                    else
                        out.push_back(make_stmt(Stmt::LocalAssign{v->name, rhs.expr}, at));
                    return;
                }
                auto fr = std::get_if<Expr::FieldRead>(&lhs.expr->node);
                std::string object;
                if (fr && std::holds_alternative<Expr::SelfRef>(fr->object->node))
                    object = "self";
                else if (fr && std::holds_alternative<Expr::Var>(fr->object->node))
                    object = std::get<Expr::Var>(fr->object->node).name;
                else
                    throw SyntaxError(at.line, at.col, "invalid assignment target");
                ExprPtr value = rhs.call ? hoist(std::move(*rhs.call), rhs.loc) : rhs.expr;
                flush(out);
                out.push_back(make_stmt(Stmt::FieldUpdate{object, fr->field, value}, at));
            } else {
                expect(";");
                if (!lhs.call)
                    throw SyntaxError(at.line, at.col, "expression statement must be a call");
                flush(out);
                out.push_back(make_stmt(Stmt::SyncCall{std::nullopt, std::move(*lhs.call)}, at));
            }
        }
    }

    StmtPtr parse_if(Block &out, SourceLoc at)
    {
        ExprPtr cond = value_expr();
        flush(out);
        Block then_b = parse_block();
        Block else_b;
        if (accept_kw("else")) {
            if (is_kw("if")) {
                SourceLoc at2 = loc();
                ++pos_;
                else_b.push_back(parse_if(else_b, at2));
            } else {
                else_b = parse_block();
            }
        }
        return make_stmt(Stmt::If{cond, std::move(then_b), std::move(else_b)}, at);
    }

    // expressions
    ExprPtr make_expr(Expr::Literal n, SourceLoc at) { return finish(std::move(n), at); }
    template <class T>
    ExprPtr finish(T node, SourceLoc at)
    {
        auto e = std::make_shared<Expr>();
        e->node = std::move(node);
        e->loc = at;
        return e;
    }

    ExprPtr hoist(CallSpec call, SourceLoc at)
    {
        std::string tmp = "%t" + std::to_string(++temp_counter_);
        hoisted_.push_back(make_stmt(Stmt::SyncCall{tmp, std::move(call)}, at));
        return finish(Expr::Var{tmp}, at);
    }

    ExprPtr as_value(ParsedExpr p) { return p.call ? hoist(std::move(*p.call), p.loc) : p.expr; }

    ExprPtr value_expr() { return as_value(parse_expr()); }

    CallSpec call_expr()
    {
        ParsedExpr p = parse_expr();
        if (!p.call)
            fail("method call");
        return std::move(*p.call);
    }

    ParsedExpr parse_expr() { return parse_binary(0); }

    static int precedence(const std::string &op)
    {
        if (op == "||")
            return 1;
        if (op == "&&")
            return 2;
        if (op == "==" || op == "!=")
            return 3;
        if (op == "<" || op == "<=" || op == ">" || op == ">=")
            return 4;
        if (op == "+" || op == "-")
            return 5;
        if (op == "*" || op == "/" || op == "%")
            return 6;
        return -1;
    }

    static BinOp binop(const std::string &op)
    {
        static const std::map<std::string, BinOp> ops = {
            {"+", BinOp::add}, {"-", BinOp::sub}, {"*", BinOp::mul}, {"/", BinOp::div},  {"%", BinOp::mod},
            {"==", BinOp::eq}, {"!=", BinOp::ne}, {"<", BinOp::lt},  {"<=", BinOp::le},  {">", BinOp::gt},
            {">=", BinOp::ge}, {"&&", BinOp::land}, {"||", BinOp::lor}};
        return ops.at(op);
    }

    ParsedExpr parse_binary(int min_prec)
    {
        ParsedExpr lhs = parse_unary();
        while (peek().kind == Tok::punct) {
            int prec = precedence(peek().text);
            if (prec < 0 || prec < min_prec)
                break;
            SourceLoc at = loc();
            std::string op = toks_[pos_++].text;
            ExprPtr l = as_value(std::move(lhs));
            ExprPtr r = as_value(parse_binary(prec + 1));
            lhs = ParsedExpr{finish(Expr::Binary{binop(op), l, r}, at), std::nullopt, at};
        }
        return lhs;
    }

    ParsedExpr parse_unary()
    {
        SourceLoc at = loc();
        if (accept("!"))
            return {finish(Expr::Unary{UnOp::lnot, as_value(parse_unary())}, at), std::nullopt, at};
        if (is_punct("-") && peek(1).kind != Tok::integer)
            return ++pos_, ParsedExpr{finish(Expr::Unary{UnOp::neg, as_value(parse_unary())}, at), std::nullopt, at};
        return parse_postfix();
    }

    ParsedExpr parse_postfix()
    {
        ParsedExpr cur = parse_primary();
        while (is_punct(".")) {
            SourceLoc at = loc();
            ++pos_;
            std::string name = ident("field or method name");
            ExprPtr obj = as_value(std::move(cur));
            if (accept("(")) {
                CallSpec c;
                c.target = obj;
                c.method = name;
                if (!is_punct(")")) {
                    do {
                        c.args.push_back(value_expr());
                    } while (accept(","));
                }
                expect(")");
                cur = ParsedExpr{nullptr, std::move(c), at};
            } else {
                cur = ParsedExpr{finish(Expr::FieldRead{obj, name}, at), std::nullopt, at};
            }
        }
        return cur;
    }

    ParsedExpr parse_primary()
    {
        SourceLoc at = loc();
        auto plain = [&](ExprPtr e) { return ParsedExpr{std::move(e), std::nullopt, at}; };
        if (peek().kind == Tok::integer || is_punct("-"))
            return plain(finish(Expr::Literal{Value(integer())}, at));
        if (accept("(")) {
            ExprPtr e = value_expr();
            expect(")");
            return plain(e);
        }
        if (accept("#"))
            return plain(finish(Expr::ContextLit{ContextId{ident("context id")}}, at));
        if (accept("{")) {
            Expr::RecordLit r;
            if (!is_punct("}")) {
                do {
                    std::string k = ident("field name");
                    expect(":");
                    r.fields.emplace_back(k, value_expr());
                } while (accept(","));
            }
            expect("}");
            return plain(finish(std::move(r), at));
        }
        if (peek().kind != Tok::ident)
            fail("expression");
        std::string name = toks_[pos_++].text;
        if (name == "true" || name == "false")
            return plain(finish(Expr::Literal{Value(name == "true")}, at));
        if (name == "unit")
            return plain(finish(Expr::Literal{Value(Unit{})}, at));
        if (name == "self")
            return plain(finish(Expr::SelfRef{}, at));
        if (name == "size") {
            expect("(");
            expect_kw("children");
            expect("[");
            std::string cls = ident("class name");
            expect("]");
            expect(")");
            return plain(finish(Expr::ChildCount{cls}, at));
        }
        if (name == "children")
            throw SyntaxError(at.line, at.col, "children[...] is only allowed in for loops and size()");
        return plain(finish(Expr::Var{name}, at));
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    Program prog_;
    std::uint32_t stmt_counter_ = 0;
    int temp_counter_ = 0;
    bool returns_value_ = false;
    Block hoisted_;
};

} // namespace

Program parse_program(std::string_view text, const std::string &source_name)
{
    Parser p(lex(text), source_name);
    return p.run();
}

Program load_program_file(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::bad_input, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_program(ss.str(), path);
}

const ContextClassDecl *Program::find_class(const std::string &name) const
{
    for (const auto &c : class_decls)
        if (c.name == name)
            return &c;
    return nullptr;
}

const MethodDef *Program::find_method(const std::string &cls, const std::string &method) const
{
    auto it = method_table.find({cls, method});
    return it == method_table.end() ? nullptr : &it->second;
}

OwnershipGraph Program::build_graph() const
{
    OwnershipGraph g;
    for (const auto &inst : instances) {
        if (!find_class(inst.class_name))
            throw Error(ErrorKind::unknown_class,
                        inst.class_name + " (context " + inst.id.value + " at line " + std::to_string(inst.loc.line) + ")");
        g.add_node(inst.id, inst.class_name);
    }
    auto link = [&](const ContextId &p, const ContextId &c) {
        if (!g.contains(p))
            throw Error(ErrorKind::unknown_context, p.value);
        if (!g.contains(c))
            throw Error(ErrorKind::unknown_context, c.value);
        if (!g.has_edge(p, c)) {
            if (p == c || g.reaches(c, p))
                throw Error(ErrorKind::cycle, p.value + " -> " + c.value);
            g.add_ownership(p, c);
        }
    };
    for (const auto &[p, c] : edges)
        link(p, c);
    for (const auto &inst : instances)
        for (const auto &[f, v] : inst.field_inits)
            if (v.is_context())
                link(inst.id, v.as_context());
    g.recompute_dominators();
    return g;
}

Store Program::initial_store(const InstanceDecl &inst) const
{
    Store s;
    auto it = class_info.find(inst.class_name);
    if (it != class_info.end())
        s = it->second.field_defaults;
    for (const auto &[f, v] : inst.field_inits)
        s[f] = v;
    return s;
}

Code cons(StmtPtr head, Code tail)
{
    auto n = std::make_shared<CodeNode>();
    n->head = std::move(head);
    n->tail = std::move(tail);
    return n;
}

Code prepend(const Block &block, Code tail)
{
    for (auto it = block.rbegin(); it != block.rend(); ++it)
        tail = cons(*it, std::move(tail));
    return tail;
}

std::size_t code_length(const Code &c)
{
    std::size_t n = 0;
    for (const CodeNode *p = c.get(); p; p = p->tail.get())
        ++n;
    return n;
}

} // namespace aeon
