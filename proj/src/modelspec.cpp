#include "orbitforge/modelspec.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

namespace orbitforge {

// ---------------------------------------------------------------------------
// expression parser (recursive descent)

struct Expression::Node {
    enum Kind { Const, Var, Unary, Binary, Call2 } kind = Const;
    double value = 0.0;
    int var_index = 0;
    char op = 0;
    std::string fn;
    std::shared_ptr<const Node> a, b;
};

namespace {

struct Parser {
    const std::string& s;
    size_t pos = 0;
    explicit Parser(const std::string& str) : s(str) {}

    void skip() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
        skip();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string& what) {
        throw ConfigError("expression parse error at position " + std::to_string(pos) + ": " +
                          what + " in '" + s + "'");
    }

    using P = std::shared_ptr<const Expression::Node>;
    static P mk(Expression::Node n) { return std::make_shared<Expression::Node>(std::move(n)); }

    P parse() {
        P e = expr();
        skip();
        if (pos != s.size()) fail("trailing input");
        return e;
    }

    P expr() {
        P lhs = term();
        for (;;) {
            skip();
            if (eat('+')) {
                Expression::Node n;
                n.kind = Expression::Node::Binary;
                n.op = '+';
                n.a = lhs;
                n.b = term();
                lhs = mk(std::move(n));
            } else if (eat('-')) {
                Expression::Node n;
                n.kind = Expression::Node::Binary;
                n.op = '-';
                n.a = lhs;
                n.b = term();
                lhs = mk(std::move(n));
            } else {
                return lhs;
            }
        }
    }
    P term() {
        P lhs = unary();
        for (;;) {
            skip();
            if (eat('*')) {
                Expression::Node n;
                n.kind = Expression::Node::Binary;
                n.op = '*';
                n.a = lhs;
                n.b = unary();
                lhs = mk(std::move(n));
            } else if (eat('/')) {
                Expression::Node n;
                n.kind = Expression::Node::Binary;
                n.op = '/';
                n.a = lhs;
                n.b = unary();
                lhs = mk(std::move(n));
            } else {
                return lhs;
            }
        }
    }
    P unary() {
        skip();
        if (eat('-')) {
            Expression::Node n;
            n.kind = Expression::Node::Unary;
            n.op = '-';
            n.a = unary();
            return mk(std::move(n));
        }
        (void)eat('+');
        return power();
    }
    P power() {
        P base = atom();
        skip();
        if (eat('^')) {
            Expression::Node n;
            n.kind = Expression::Node::Binary;
            n.op = '^';
            n.a = base;
            n.b = unary();  // right-associative
            return mk(std::move(n));
        }
        return base;
    }
    P atom() {
        skip();
        if (pos >= s.size()) fail("unexpected end");
        if (eat('(')) {
            P e = expr();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        const char c = s[pos];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            size_t used = 0;
            const double v = std::stod(s.substr(pos), &used);
            pos += used;
            Expression::Node n;
            n.kind = Expression::Node::Const;
            n.value = v;
            return mk(std::move(n));
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos;
            while (pos < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
                ++pos;
            const std::string name = s.substr(start, pos - start);
            skip();
            if (pos < s.size() && s[pos] == '(') {
                ++pos;
                P a = expr();
                P b;
                if (eat(',')) b = expr();
                if (!eat(')')) fail("expected ')' after call");
                Expression::Node n;
                if (b) {
                    if (name != "pow") fail("unknown two-argument function " + name);
                    n.kind = Expression::Node::Call2;
                    n.fn = name;
                    n.a = a;
                    n.b = b;
                } else {
                    static const std::map<std::string, int> fns = {
                        {"sin", 0},  {"cos", 0},  {"tan", 0},  {"sinh", 0}, {"cosh", 0},
                        {"tanh", 0}, {"exp", 0},  {"log", 0},  {"sqrt", 0}, {"abs", 0}};
                    if (!fns.count(name)) fail("unknown function " + name);
                    n.kind = Expression::Node::Call2;
                    n.fn = name;
                    n.a = a;
                }
                return mk(std::move(n));
            }
            Expression::Node n;
            if (name == "pi") {
                n.kind = Expression::Node::Const;
                n.value = M_PI;
            } else if (name == "e") {
                n.kind = Expression::Node::Const;
                n.value = M_E;
            } else if (name == "t" || name == "x" || name == "x1") {
                n.kind = Expression::Node::Var;
                n.var_index = 0;
            } else if (name == "y" || name == "x2") {
                n.kind = Expression::Node::Var;
                n.var_index = 1;
            } else if (name == "z" || name == "x3") {
                n.kind = Expression::Node::Var;
                n.var_index = 2;
            } else if (name.size() >= 2 && name[0] == 'x' &&
                       std::isdigit(static_cast<unsigned char>(name[1]))) {
                n.kind = Expression::Node::Var;
                n.var_index = std::stoi(name.substr(1)) - 1;
            } else {
                fail("unknown identifier " + name);
            }
            return mk(std::move(n));
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

double eval_node(const Expression::Node& n, const Eigen::VectorXd& x);

double call_fn(const std::string& fn, double a, double b) {
    if (fn == "sin") return std::sin(a);
    if (fn == "cos") return std::cos(a);
    if (fn == "tan") return std::tan(a);
    if (fn == "sinh") return std::sinh(a);
    if (fn == "cosh") return std::cosh(a);
    if (fn == "tanh") return std::tanh(a);
    if (fn == "exp") return std::exp(a);
    if (fn == "log") return std::log(a);
    if (fn == "sqrt") return std::sqrt(a);
    if (fn == "abs") return std::abs(a);
    if (fn == "pow") return std::pow(a, b);
    throw ConfigError("unknown function " + fn);
}

double eval_node(const Expression::Node& n, const Eigen::VectorXd& x) {
    switch (n.kind) {
        case Expression::Node::Const:
            return n.value;
        case Expression::Node::Var:
            if (n.var_index >= x.size())
                throw ConfigError("expression references variable x" +
                                  std::to_string(n.var_index + 1) + " beyond dim");
            return x[n.var_index];
        case Expression::Node::Unary:
            return -eval_node(*n.a, x);
        case Expression::Node::Binary: {
            const double a = eval_node(*n.a, x);
            const double b = eval_node(*n.b, x);
            switch (n.op) {
                case '+': return a + b;
                case '-': return a - b;
                case '*': return a * b;
                case '/': return a / b;
                case '^': return std::pow(a, b);
            }
            throw ConfigError("bad operator");
        }
        case Expression::Node::Call2:
            return call_fn(n.fn, eval_node(*n.a, x), n.b ? eval_node(*n.b, x) : 0.0);
    }
    throw ConfigError("bad expression node");
}

}  // namespace

Expression::Expression(const std::string& text) {
    Parser p(text);
    root_ = p.parse();
}

double Expression::eval(const Eigen::VectorXd& x) const { return eval_node(*root_, x); }

double Expression::eval1(double t) const {
    Eigen::VectorXd x(1);
    x[0] = t;
    return eval_node(*root_, x);
}

// ---------------------------------------------------------------------------
// builtin models

ManifoldModel ModelSpec::build() const {
    const int n = dim;
    ManifoldModel::MetricFn metric;
    if (metric_name == "flat") {
        metric = [n](const Vec&) { return Mat(Mat::Identity(n, n)); };
    } else if (metric_name == "circle") {
        if (n != 1) throw ConfigError("circle metric requires dim 1");
        metric = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
    } else if (metric_name == "torus") {
        metric = [n](const Vec&) { return Mat(Mat::Identity(n, n)); };
    } else if (metric_name == "sphere-chart") {
        if (n != 2) throw ConfigError("sphere-chart metric requires dim 2");
        metric = [](const Vec& x) {
            Mat g = Mat::Identity(2, 2);
            const double s = std::sin(x[0]);
            g(1, 1) = s * s;
            return g;
        };
    } else if (raw.contains("metric") && raw.at("metric").is_object() &&
               raw.at("metric").contains("entries")) {
        // expression entries g_ij
        const auto& rows = raw.at("metric").at("entries");
        if (!rows.is_array() || static_cast<int>(rows.size()) != n)
            throw ConfigError("metric entries must be a dim x dim array of expressions");
        auto exprs = std::make_shared<std::vector<std::vector<Expression>>>();
        for (const auto& row : rows) {
            if (!row.is_array() || static_cast<int>(row.size()) != n)
                throw ConfigError("metric entries must be a dim x dim array of expressions");
            exprs->emplace_back();
            for (const auto& cell : row) exprs->back().emplace_back(cell.get<std::string>());
        }
        metric = [n, exprs](const Vec& x) {
            Mat g(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) g(i, j) = (*exprs)[i][j].eval(x);
            return Mat(0.5 * (g + g.transpose()));
        };
    } else {
        throw ConfigError("unknown metric spec: " + metric_name);
    }

    ManifoldModel::ScalarFn pot;
    if (potential_name == "pendulum") {
        pot = [](const Vec& x) { return std::cos(x[0]); };
    } else if (potential_name == "double-well-on-circle") {
        // maxima at 0 and pi, V = (cos(2 theta) - 1)/2 = -sin^2 theta
        pot = [](const Vec& x) { return 0.5 * (std::cos(2.0 * x[0]) - 1.0); };
    } else if (!potential_name.empty()) {
        auto ex = std::make_shared<Expression>(potential_name);
        pot = [ex](const Vec& x) { return ex->eval(x); };
    } else {
        throw ConfigError("missing potential spec");
    }

    ManifoldModel model(n, topology, std::move(metric), std::move(pot));
    if (potential_name == "pendulum") {
        model.set_potential_gradient([](const Vec& x) {
            Vec g(1);
            g[0] = -std::sin(x[0]);
            return g;
        });
        model.set_potential_hessian([](const Vec& x) {
            Mat h(1, 1);
            h(0, 0) = -std::cos(x[0]);
            return h;
        });
    } else if (potential_name == "double-well-on-circle") {
        model.set_potential_gradient([](const Vec& x) {
            Vec g(1);
            g[0] = -std::sin(2.0 * x[0]);
            return g;
        });
        model.set_potential_hessian([](const Vec& x) {
            Mat h(1, 1);
            h(0, 0) = -2.0 * std::cos(2.0 * x[0]);
            return h;
        });
    }
    return model;
}

TimeFactor FactorSpec::build() const {
    if (kind == "power") return TimeFactor::power(m);
    if (kind == "custom") {
        auto fe = std::make_shared<Expression>(expr);
        auto fpe = std::make_shared<Expression>(d_expr);
        auto fppe = std::make_shared<Expression>(dd_expr);
        return TimeFactor::custom([fe](double t) { return fe->eval1(t); },
                                  [fpe](double t) { return fpe->eval1(t); },
                                  [fppe](double t) { return fppe->eval1(t); }, t0);
    }
    throw ConfigError("factor kind must be power or custom");
}

// ---------------------------------------------------------------------------
// json parsing

namespace {

Eigen::VectorXd parse_point(const nlohmann::ordered_json& j) {
    if (!j.is_array()) throw ConfigError("chart point must be an array");
    Eigen::VectorXd x(j.size());
    for (size_t i = 0; i < j.size(); ++i) x[i] = j[i].get<double>();
    return x;
}

template <typename T>
void maybe(const nlohmann::ordered_json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ModelSpec parse_model(const nlohmann::ordered_json& j) {
    ModelSpec m;
    m.raw = j;
    if (!j.contains("dim")) throw ConfigError("model: missing dim");
    m.dim = j.at("dim").get<int>();
    if (m.dim < 1) throw ConfigError("model: dim must be positive");
    if (j.contains("topology")) {
        for (const auto& t : j.at("topology")) {
            const std::string s = t.get<std::string>();
            if (s == "line") {
                m.topology.push_back(ChartTopology::line());
            } else if (s.rfind("circle", 0) == 0) {
                double period = 2.0 * M_PI;
                const auto colon = s.find(':');
                if (colon != std::string::npos) period = std::stod(s.substr(colon + 1));
                m.topology.push_back(ChartTopology::circle(period));
            } else {
                throw ConfigError("topology entries must be 'line' or 'circle[:period]'");
            }
        }
    } else {
        m.topology.assign(m.dim, ChartTopology::line());
    }
    if (static_cast<int>(m.topology.size()) != m.dim)
        throw ConfigError("model: topology length must equal dim");
    if (!j.contains("metric")) throw ConfigError("model: missing metric");
    const auto& met = j.at("metric");
    m.metric_name = met.is_string() ? met.get<std::string>()
                                    : met.value("builtin", std::string("entries"));
    if (!j.contains("potential")) throw ConfigError("model: missing potential");
    const auto& pot = j.at("potential");
    m.potential_name = pot.is_string() ? pot.get<std::string>()
                                       : pot.value("builtin", pot.value("expr", std::string()));
    if (!j.contains("x_minus") || !j.contains("x_plus"))
        throw ConfigError("model: missing x_minus / x_plus");
    m.x_minus = parse_point(j.at("x_minus"));
    m.x_plus = parse_point(j.at("x_plus"));
    if (m.x_minus.size() != m.dim || m.x_plus.size() != m.dim)
        throw ConfigError("model: x_pm dimension mismatch");
    return m;
}

FactorSpec parse_factor(const nlohmann::ordered_json& j) {
    FactorSpec f;
    f.raw = j;
    if (!j.contains("kind")) throw ConfigError("factor: missing kind");
    f.kind = j.at("kind").get<std::string>();
    if (f.kind == "power") {
        if (!j.contains("m")) throw ConfigError("factor: power kind requires m");
        f.m = j.at("m").get<int>();
        if (f.m < 1) throw ConfigError("factor: m must be a positive integer");
    } else if (f.kind == "custom") {
        f.expr = j.at("f").get<std::string>();
        f.d_expr = j.at("f_prime").get<std::string>();
        f.dd_expr = j.at("f_second").get<std::string>();
        maybe(j, "t0", f.t0);
    } else {
        throw ConfigError("factor: kind must be power or custom");
    }
    return f;
}

RunConfig parse_run_config(const nlohmann::ordered_json& j) {
    RunConfig c;
    c.raw = j;
    if (!j.contains("model")) throw ConfigError("run config: missing model");
    if (j.at("model").is_string()) {
        std::ifstream in(j.at("model").get<std::string>());
        if (!in) throw ConfigError("cannot open model file " + j.at("model").get<std::string>());
        nlohmann::ordered_json mj;
        in >> mj;
        c.model = parse_model(mj);
    } else {
        c.model = parse_model(j.at("model"));
    }
    if (!j.contains("factor")) throw ConfigError("run config: missing factor");
    c.factor = parse_factor(j.at("factor"));
    if (j.contains("winding")) {
        for (const auto& w : j.at("winding")) c.winding.push_back(w.get<int>());
    }
    maybe(j, "lambda_factor", c.lambda_factor);
    maybe(j, "nu_factor", c.nu_factor);
    maybe(j, "margin_sigma", c.margin_sigma);
    maybe(j, "schedule_mode", c.schedule_mode);
    maybe(j, "p_hat", c.p_hat);
    maybe(j, "stage_budget", c.stage_budget);
    maybe(j, "eps_asymptotic", c.eps_asymptotic);
    maybe(j, "eps_tail", c.eps_tail);
    maybe(j, "seed_cells", c.seed_cells);
    maybe(j, "h_max", c.h_max);
    maybe(j, "resolution_factor", c.resolution_factor);
    maybe(j, "min_ext_cells", c.min_ext_cells);
    maybe(j, "newton_tol_rel", c.newton_tol_rel);
    maybe(j, "newton_tol_abs", c.newton_tol_abs);
    maybe(j, "newton_max_iter", c.newton_max_iter);
    maybe(j, "step_cap", c.step_cap);
    maybe(j, "trust_radius", c.trust_radius);
    maybe(j, "xi0_init", c.xi0_init);
    maybe(j, "xi0_floor", c.xi0_floor);
    maybe(j, "ball_r_init", c.ball_r_init);
    maybe(j, "ball_shrink", c.ball_shrink);
    maybe(j, "ball_shells", c.ball_shells);
    maybe(j, "ball_directions", c.ball_directions);
    maybe(j, "out_dir", c.out_dir);
    maybe(j, "seed", c.seed);
    if (c.schedule_mode != "adaptive" && c.schedule_mode != "certified-generic" &&
        c.schedule_mode != "certified-power")
        throw ConfigError("schedule_mode must be adaptive | certified-generic | certified-power");
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    return parse_run_config(j);
}

std::string config_hash(const nlohmann::ordered_json& j) {
    const std::string s = j.dump();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace orbitforge
