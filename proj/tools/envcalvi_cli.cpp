// Command-line front end: simulate / fit / select / bootstrap / bench / check.
// Exit codes: 0 success, 2 input or validation error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "envcalvi/io.hpp"
#include "envcalvi/modelselect.hpp"
#include "envcalvi/oracle/euclid.hpp"
#include "envcalvi/oracle/finite_diff.hpp"
#include "envcalvi/oracle/mc_checks.hpp"
#include "envcalvi/parallel.hpp"
#include "envcalvi/predictor_calvi.hpp"
#include "envcalvi/response_cavi.hpp"
#include "envcalvi/simgen.hpp"

namespace {

using namespace envcalvi;
using nlohmann::json;

constexpr const char* kSchema = "envcalvi/1";

// Values from a --config JSON file act as defaults; explicit flags win.
class ConfigDefaults {
public:
    void load(const std::string& path) { j_ = read_json(path); }

    template <typename T>
    void apply(const std::string& key, T& target) const {
        if (j_.contains(key)) target = j_.at(key).get<T>();
    }

private:
    json j_ = json::object();
};

std::string extract_config_path(std::vector<std::string>& args) {
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw InputError("--config requires a path");
            const std::string path = args[i + 1];
            args.erase(args.begin() + i, args.begin() + i + 2);
            return path;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            const std::string path = args[i].substr(9);
            args.erase(args.begin() + i);
            return path;
        }
    }
    return {};
}

FitOptions::Init parse_init(const std::string& s) {
    if (s == "ols") return FitOptions::Init::OlsPilot;
    if (s == "prior") return FitOptions::Init::Prior;
    throw InputError("--init must be 'ols' or 'prior'");
}

json response_state_to_json(const ResponseVarState& st) {
    json v;
    v["mu_q"] = vector_to_json(st.mu_q);
    v["sigma_q"] = matrix_to_json(st.Sigma_q);
    v["eta_q"] = matrix_to_json(st.eta_q);
    v["u_eta"] = matrix_to_json(st.U_eta);
    v["v_eta"] = matrix_to_json(st.V_eta);
    v["psi1_q"] = matrix_to_json(st.Psi1_q);
    v["nu1_q"] = st.nu1_q;
    v["psi0_q"] = matrix_to_json(st.Psi0_q);
    v["nu0_q"] = st.nu0_q;
    v["a_hat"] = matrix_to_json(st.laplace.A_hat);
    v["a_cov"] = matrix_to_json(st.laplace.cov);
    return v;
}

json predictor_state_to_json(const PredictorVarState& st) {
    json v;
    v["mu_x_q"] = vector_to_json(st.muX_q);
    v["sigma_x_q"] = matrix_to_json(st.SigmaX_q);
    v["mu_y_q"] = vector_to_json(st.muY_q);
    v["sigma_y_q"] = matrix_to_json(st.SigmaY_q);
    v["eta_q"] = matrix_to_json(st.eta_q);
    v["sigma_eta_q"] = matrix_to_json(st.Sigma_eta);
    v["psi_y_q"] = matrix_to_json(st.PsiY_q);
    v["nu_y_q"] = st.nuY_q;
    v["psi_x1_q"] = matrix_to_json(st.PsiX1_q);
    v["nu_x1_q"] = st.nuX1_q;
    v["psi_x0_q"] = matrix_to_json(st.PsiX0_q);
    v["nu_x0_q"] = st.nuX0_q;
    v["a_hat"] = matrix_to_json(st.laplace.A_hat);
    v["a_cov"] = matrix_to_json(st.laplace.cov);
    return v;
}

std::vector<std::string> indexed_header(const std::string& prefix, Index count) {
    std::vector<std::string> h;
    for (Index i = 1; i <= count; ++i) h.push_back(prefix + std::to_string(i));
    return h;
}

int cmd_simulate(const std::string& model, Index r, Index p, Index dim, Index n,
                 std::uint64_t seed, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string ypath = out_dir + "/Y.csv";
    const std::string xpath = out_dir + "/X.csv";
    const std::string tpath = out_dir + "/truth.json";
    if (model == "response") {
        const ResponseEnvSpec spec{r, p, dim};
        auto [ds, truth] = gen_response(spec, n, seed);
        write_csv(ypath, ds.Y, indexed_header("y", r));
        write_csv(xpath, ds.X, indexed_header("x", p));
        write_json(tpath, response_truth_to_json(spec, n, seed, truth));
    } else if (model == "predictor") {
        const PredictorEnvSpec spec{r, p, dim};
        auto [ds, truth] = gen_predictor(spec, n, seed);
        write_csv(ypath, ds.Y, indexed_header("y", r));
        write_csv(xpath, ds.X, indexed_header("x", p));
        write_json(tpath, predictor_truth_to_json(spec, n, seed, truth));
    } else {
        throw InputError("--model must be 'response' or 'predictor'");
    }
    std::cout << "wrote " << ypath << ", " << xpath << ", " << tpath << "\n";
    return 0;
}

int cmd_fit(const std::string& model, const std::string& ypath, const std::string& xpath,
            Index dim, const FitOptions& opts, std::uint64_t seed, const std::string& out) {
    Dataset ds(read_csv(ypath), read_csv(xpath));
    json j;
    j["schema"] = kSchema;
    j["model"] = model;
    j["seed"] = seed;
    if (model == "response") {
        const ResponseEnvSpec spec{ds.Y.cols(), ds.X.cols(), dim};
        const ResponsePriors priors = ResponsePriors::vague(spec);
        const FitReport rep = fit(ds, spec, priors, opts);
        j["spec"] = {{"r", spec.r}, {"p", spec.p}, {"u", spec.u}};
        j["converged"] = rep.converged;
        j["iterations"] = rep.iterations;
        j["elbo_trace"] = rep.elbo_trace;
        j["beta_hat"] = matrix_to_json(rep.beta_hat);
        j["mu_hat"] = vector_to_json(rep.mu_hat);
        j["variational"] = response_state_to_json(rep.state);
        j["wall_time_s"] = rep.wall_time_s;
    } else if (model == "predictor") {
        const PredictorEnvSpec spec{ds.Y.cols(), ds.X.cols(), dim};
        const PredictorPriors priors = PredictorPriors::vague(spec);
        const PredictorFitReport rep = fit_pred(ds, spec, priors, opts);
        j["spec"] = {{"r", spec.r}, {"p", spec.p}, {"m", spec.m}};
        j["converged"] = rep.converged;
        j["iterations"] = rep.iterations;
        j["elbo_trace"] = rep.elbo_trace;
        j["beta_hat"] = matrix_to_json(rep.beta_hat);
        j["mu_hat"] = vector_to_json(rep.mu_hat);
        j["variational"] = predictor_state_to_json(rep.state);
        j["wall_time_s"] = rep.wall_time_s;
    } else {
        throw InputError("--model must be 'response' or 'predictor'");
    }
    write_json(out, j);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_select(const std::string& model, const std::string& ypath, const std::string& xpath,
               Index u_min, Index u_max, const std::string& prior_arg, int parallel,
               const FitOptions& opts, const std::string& out) {
    Dataset ds(read_csv(ypath), read_csv(xpath));
    std::vector<double> prior_weights;
    if (prior_arg != "uniform") {
        const json pj = read_json(prior_arg);
        prior_weights = pj.get<std::vector<double>>();
    }
    json j;
    j["schema"] = kSchema;
    j["model"] = model;
    if (model == "response") {
        const ResponseEnvSpec base{ds.Y.cols(), ds.X.cols(), 0};
        const ResponseSelection sel =
            select_response(ds, base, nullptr, u_min, u_max, prior_weights, opts, parallel);
        json cands = json::array();
        for (size_t i = 0; i < sel.posterior.dims.size(); ++i) {
            cands.push_back({{"u", sel.posterior.dims[i]},
                             {"loglik", sel.posterior.logliks[i]},
                             {"bic", sel.posterior.bics[i]},
                             {"prob", sel.posterior.probs[i]},
                             {"iterations", sel.iterations[i]},
                             {"converged", static_cast<bool>(sel.converged[i])}});
        }
        j["candidates"] = cands;
        j["mode"] = sel.posterior.mode();
        j["beta_bma"] = matrix_to_json(sel.beta_bma);
    } else if (model == "predictor") {
        const Index p = ds.X.cols(), r = ds.Y.cols();
        const Index lo = std::max<Index>(1, u_min);
        const Index hi = std::min<Index>(p - 1, u_max);
        if (lo > hi) throw InputError("select: empty candidate range for the predictor model");
        const int count = static_cast<int>(hi - lo + 1);
        std::vector<int> dims(count);
        std::vector<double> logliks(count);
        std::vector<Matrix> betas(count);
        std::vector<int> iters(count);
        std::vector<char> conv(count);
        parallel_for(count, parallel, [&](int idx) {
            const PredictorEnvSpec spec{r, p, lo + idx};
            const PredictorPriors priors = PredictorPriors::vague(spec);
            const PredictorFitReport rep = fit_pred(ds, spec, priors, opts);
            dims[idx] = static_cast<int>(spec.m);
            logliks[idx] = predictor_loglik_at_means(rep.state, ds, spec);
            betas[idx] = rep.beta_hat;
            iters[idx] = rep.iterations;
            conv[idx] = rep.converged ? 1 : 0;
        });
        std::vector<double> bics(count);
        for (int i = 0; i < count; ++i) {
            bics[i] = bic(logliks[i], predictor_param_count(r, p, dims[i]), ds.n());
        }
        const DimensionPosterior post = dim_posterior(dims, logliks, bics, prior_weights);
        json cands = json::array();
        for (int i = 0; i < count; ++i) {
            cands.push_back({{"m", dims[i]},
                             {"loglik", logliks[i]},
                             {"bic", bics[i]},
                             {"prob", post.probs[i]},
                             {"iterations", iters[i]},
                             {"converged", conv[i] != 0}});
        }
        j["candidates"] = cands;
        j["mode"] = post.mode();
        j["beta_bma"] = matrix_to_json(bma_beta(betas, post.probs));
    } else {
        throw InputError("--model must be 'response' or 'predictor'");
    }
    write_json(out, j);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_bootstrap(const std::string& ypath, const std::string& xpath, Index u, int B,
                  std::uint64_t seed, int parallel, const FitOptions& opts,
                  const std::string& out) {
    Dataset ds(read_csv(ypath), read_csv(xpath));
    const ResponseEnvSpec spec{ds.Y.cols(), ds.X.cols(), u};
    const ResponsePriors priors = ResponsePriors::vague(spec);
    const FitReport rep = fit(ds, spec, priors, opts);
    const BootstrapResult boot = residual_bootstrap(ds, spec, priors, rep, B, seed, opts, parallel);
    json j;
    j["schema"] = kSchema;
    j["model"] = "response";
    j["u"] = u;
    j["B"] = B;
    j["seed"] = seed;
    j["rmse"] = boot.rmse;
    j["per_replicate"] = boot.per_replicate;
    j["failures"] = boot.failures;
    write_json(out, j);
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_bench(Index r, Index u, int reps, const std::string& out) {
    const oracle::BenchResult res = oracle::bench_derivatives(r, u, reps);
    std::ostringstream os;
    os << "r,u,reps,euclid_ms,reparam_ms\n"
       << r << "," << u << "," << reps << "," << format_double(res.euclid_ms) << ","
       << format_double(res.reparam_ms) << "\n";
    if (out.empty()) {
        std::cout << os.str();
    } else {
        std::ofstream f(out);
        if (!f) throw InputError("bench: cannot open " + out);
        f << os.str();
        std::cout << "wrote " << out << "\n";
    }
    return 0;
}

int cmd_check(std::uint64_t seed, const std::string& out) {
    struct Row {
        std::string name;
        double value;
        double threshold;
        bool pass;
    };
    std::vector<Row> rows;
    Rng rng(seed);
    const auto rand_mat = [&](Index rr, Index cc) {
        Matrix m(rr, cc);
        for (Index j = 0; j < cc; ++j) {
            for (Index i = 0; i < rr; ++i) m(i, j) = rng.uniform(-1.0, 1.0);
        }
        return m;
    };

    // Commutation round trips.
    {
        double worst = 0.0;
        for (Index m = 1; m <= 6; ++m) {
            for (Index n = 1; n <= 6; ++n) {
                const Matrix a = rand_mat(m, n);
                const Commutation k(m, n);
                worst = std::max(worst,
                                 (k.apply(vec(a)) - vec(Matrix(a.transpose()))).cwiseAbs().maxCoeff());
            }
        }
        rows.push_back({"commutation_vec_transpose", worst, 0.0, worst <= 0.0});
    }
    // Block-trace identity.
    {
        double worst = 0.0;
        for (int rep = 0; rep < 50; ++rep) {
            const Index d = 2 + static_cast<Index>(rng.next_u64() % 3);
            const Index nn = 2 + static_cast<Index>(rng.next_u64() % 3);
            const Matrix s = rand_mat(nn, nn);
            const Matrix rmat = rand_mat(d, d);
            const Matrix h = rand_mat(d * nn, d * nn);
            const double lhs = (kron(s, rmat) * h).trace();
            const double rhs = (s * ktr(rmat, h)).trace();
            worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
        }
        rows.push_back({"block_trace_identity", worst, 1e-12, worst <= 1e-12});
    }
    // Derivative gates on a random response instance.
    {
        const Index r = 5, u = 2;
        const ResponseEnvSpec spec{r, 3, u};
        auto [ds, truth] = gen_response(spec, 60, seed + 1);
        const ResponsePriors priors = ResponsePriors::vague(spec);
        ResponseVarState st = initialize_response_state(ds, spec, priors, FitOptions::Init::OlsPilot);
        const MomentBundle mb = make_moment_bundle(st, ds, spec, priors);
        const Matrix a0 = rand_mat(r - u, u);
        const auto fvec = [&](const Vector& v) { return ftilde(unvec(v, r - u, u), mb); };
        const Vector gref = oracle::fd_grad(fvec, vec(a0));
        const double gerr = (vec(grad_ftilde(a0, mb)) - gref).norm() / (1.0 + gref.norm());
        rows.push_back({"response_gradient_fd", gerr, 1e-5, gerr <= 1e-5});
        const auto gvec = [&](const Vector& v) { return vec(grad_ftilde(unvec(v, r - u, u), mb)); };
        const Matrix href = oracle::fd_jacobian(gvec, vec(a0));
        const double herr =
            (hess_ftilde(a0, mb) - 0.5 * (href + href.transpose())).norm() / (1.0 + href.norm());
        rows.push_back({"response_hessian_fd", herr, 1e-4, herr <= 1e-4});
    }
    // Gaussian-expectation identity against Monte Carlo.
    {
        const Index ru = 3, u = 2;
        const Matrix a_hat = rand_mat(ru, u);
        Matrix covroot = rand_mat(ru * u, ru * u);
        const Matrix cov = 0.01 * (covroot * covroot.transpose()) +
                           0.01 * Matrix::Identity(ru * u, ru * u);
        Matrix c1 = rand_mat(ru + u, ru + u);
        c1 = 0.5 * (c1 + c1.transpose());
        Matrix c2 = rand_mat(u, u);
        c2 = 0.5 * (c2 + c2.transpose());
        const Matrix ca = make_CA(a_hat);
        const double closed =
            ((ca.transpose() * c1 * ca + ktr(c1.bottomRightCorner(ru, ru), cov)) * c2).trace();
        const auto mc = oracle::mc_gaussian_quadratic(c1, c2, a_hat, cov, oracle::QuadKind::C,
                                                      20000, seed + 7);
        const double dev = std::abs(mc.estimate - closed) / std::max(1e-12, 3.0 * mc.mcse);
        rows.push_back({"gaussian_quadratic_mc", dev, 1.0, dev <= 1.0});
    }

    bool all_pass = true;
    std::ostringstream csv;
    csv << "check,value,threshold,pass\n";
    for (const auto& row : rows) {
        all_pass = all_pass && row.pass;
        std::cout << (row.pass ? "PASS " : "FAIL ") << row.name << " (value "
                  << row.value << ", threshold " << row.threshold << ")\n";
        csv << row.name << "," << format_double(row.value) << ","
            << format_double(row.threshold) << "," << (row.pass ? 1 : 0) << "\n";
    }
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw InputError("check: cannot open " + out);
        f << csv.str();
    }
    std::cout << (all_pass ? "all checks passed\n" : "some checks FAILED\n");
    return all_pass ? 0 : 3;
}

int run(std::vector<std::string> args) {
    ConfigDefaults cfg;
    const std::string cfg_path = extract_config_path(args);
    if (!cfg_path.empty()) cfg.load(cfg_path);

    CLI::App app{"Bayesian envelope regression by coordinate-ascent Laplace variational inference"};
    app.require_subcommand(1);

    // Shared option storage.
    std::string model = "response";
    std::string ypath, xpath, out, out_dir = ".", prior_arg = "uniform", init_arg = "ols";
    Index r = 0, p = 0, dim = 1, n = 100, u_min = 0, u_max = 0;
    std::uint64_t seed = 1;
    double tol = 1e-6;
    int max_iter = 10000, parallel = 1, reps = 5, B = 100;
    cfg.apply("model", model);
    cfg.apply("tol", tol);
    cfg.apply("max-iter", max_iter);
    cfg.apply("seed", seed);
    cfg.apply("parallel", parallel);
    cfg.apply("init", init_arg);

    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    sim->add_option("--model", model);
    sim->add_option("--r", r)->required();
    sim->add_option("--p", p)->required();
    sim->add_option("--u,--m", dim)->required();
    sim->add_option("--n", n)->required();
    sim->add_option("--seed", seed);
    sim->add_option("--out", out_dir);

    auto* fitc = app.add_subcommand("fit", "fit one envelope dimension");
    fitc->add_option("--model", model);
    fitc->add_option("--y", ypath)->required();
    fitc->add_option("--x", xpath)->required();
    fitc->add_option("--u,--m", dim)->required();
    fitc->add_option("--tol", tol);
    fitc->add_option("--max-iter", max_iter);
    fitc->add_option("--init", init_arg);
    fitc->add_option("--seed", seed);
    fitc->add_option("--out", out)->required();

    auto* selc = app.add_subcommand("select", "BIC dimension selection with model averaging");
    selc->add_option("--model", model);
    selc->add_option("--y", ypath)->required();
    selc->add_option("--x", xpath)->required();
    selc->add_option("--u-min", u_min)->required();
    selc->add_option("--u-max", u_max)->required();
    selc->add_option("--prior", prior_arg);
    selc->add_option("--parallel", parallel);
    selc->add_option("--tol", tol);
    selc->add_option("--max-iter", max_iter);
    selc->add_option("--init", init_arg);
    selc->add_option("--out", out)->required();

    auto* bootc = app.add_subcommand("bootstrap", "residual bootstrap of the coefficient matrix");
    bootc->add_option("--y", ypath)->required();
    bootc->add_option("--x", xpath)->required();
    bootc->add_option("--u", dim)->required();
    bootc->add_option("-B,--B", B);
    bootc->add_option("--seed", seed);
    bootc->add_option("--parallel", parallel);
    bootc->add_option("--tol", tol);
    bootc->add_option("--max-iter", max_iter);
    bootc->add_option("--out", out)->required();

    auto* benchc = app.add_subcommand("bench", "time the two derivative-assembly routes");
    benchc->add_option("--r", r)->required();
    benchc->add_option("--u", dim)->required();
    benchc->add_option("--reps", reps);
    benchc->add_option("--out", out);

    auto* checkc = app.add_subcommand("check", "run the numerical identity checks");
    checkc->add_option("--seed", seed);
    checkc->add_option("--out", out);

    std::vector<const char*> argv;
    argv.push_back("envcalvi");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    FitOptions opts;
    opts.tol = tol;
    opts.max_iter = max_iter;
    opts.init = parse_init(init_arg);

    if (sim->parsed()) return cmd_simulate(model, r, p, dim, n, seed, out_dir);
    if (fitc->parsed()) return cmd_fit(model, ypath, xpath, dim, opts, seed, out);
    if (selc->parsed())
        return cmd_select(model, ypath, xpath, u_min, u_max, prior_arg, parallel, opts, out);
    if (bootc->parsed()) return cmd_bootstrap(ypath, xpath, dim, B, seed, parallel, opts, out);
    if (benchc->parsed()) return cmd_bench(r, dim, reps, out);
    if (checkc->parsed()) return cmd_check(seed, out);
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run(std::move(args));
    } catch (const envcalvi::InputError& e) {
        nlohmann::json err = {{"error", "input"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const envcalvi::NumericalError& e) {
        nlohmann::json err = {{"error", "numerical"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 3;
    } catch (const std::exception& e) {
        nlohmann::json err = {{"error", "internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 3;
    }
}
