#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qtrack/cli/runner.hpp"

namespace qtrack::cli {
namespace {

struct Cell {
  std::string name;
  ExperimentConfig cfg;
};

void set_toggles(ExperimentConfig& c, bool upd, bool pqi, bool hqd) {
  c.model.probabilistic = upd;
  c.train.use_pqi = pqi;
  c.train.use_hqd = hqd;
}

ExperimentConfig cell_config(const ExperimentConfig& base,
                             const std::string& name) {
  ExperimentConfig c = base;
  if (name == "baseline")
    set_toggles(c, false, false, false);
  else if (name == "upd")
    set_toggles(c, true, false, false);
  else if (name == "pqi")
    set_toggles(c, false, true, false);
  else if (name == "hqd")
    set_toggles(c, false, false, true);
  else if (name == "full")
    set_toggles(c, true, true, true);
  else
    throw std::invalid_argument("ablate: unknown cell '" + name + "'");
  return c;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

std::vector<AblationRow> run_ablate(const ExperimentConfig& cfg,
                                    const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::vector<Cell> cells;
  for (const std::string& name : cfg.ablate.cells)
    cells.push_back({name, cell_config(cfg, name)});

  if (cfg.ablate.beta_modes) {
    ExperimentConfig full = cfg;
    set_toggles(full, true, true, true);
    Cell none{"mode_none", full};
    none.cfg.train.hqd_mode = HqdMode::AllPos;
    Cell single{"mode_single", full};
    single.cfg.train.hqd_mode = HqdMode::Single;
    Cell hier{"mode_hier", full};
    hier.cfg.train.hqd_mode = HqdMode::Hierarchical;
    cells.push_back(std::move(none));
    cells.push_back(std::move(single));
    cells.push_back(std::move(hier));
  }

  if (cfg.ablate.beta_grid) {
    for (double bl : cfg.ablate.beta_lowers)
      for (double bu : cfg.ablate.beta_uppers) {
        Cell c{"beta_" + num(bl) + "_" + num(bu), cfg};
        set_toggles(c.cfg, true, true, true);
        c.cfg.train.hqd_mode = HqdMode::Hierarchical;
        c.cfg.train.hqd_beta_lower = bl;
        c.cfg.train.hqd_beta_upper = bu;
        cells.push_back(std::move(c));
      }
  }

  // Cells run in a worker pool; each cell trains and evaluates
  // single-threaded so its artifacts never depend on scheduling.
  for (Cell& c : cells) c.cfg.eval.workers = 1;

  const int n = static_cast<int>(cells.size());
  std::vector<AblationRow> rows(static_cast<std::size_t>(n));
  std::vector<TrainResult> trains(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));

  auto run_cell = [&](int i) {
    const Cell& c = cells[static_cast<std::size_t>(i)];
    const std::string dir = (fs::path(out_dir) / c.name).string();
    TrainResult tr = run_train(c.cfg, dir);
    EvalReport rep = run_eval(c.cfg, tr.checkpoint_path, dir);
    trains[static_cast<std::size_t>(i)] = std::move(tr);
    rows[static_cast<std::size_t>(i)] = {c.name, std::move(rep)};
  };

  const int workers = std::max(1, std::min(cfg.eval.workers, n > 0 ? n : 1));
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) run_cell(i);
  } else {
    std::atomic<int> next{0};
    auto work = [&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          run_cell(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::ostringstream csv;
  csv << "cell,amota,amotp,mota,motp,recall,ids,fp,fn,latency,"
         "probe_entropy,probe_score_std,probe_center_spread,"
         "train_first_total,train_last_total\n";
  auto val = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  for (int i = 0; i < n; ++i) {
    const AblationRow& r = rows[static_cast<std::size_t>(i)];
    const TrainResult& t = trains[static_cast<std::size_t>(i)];
    csv << r.name << ',' << val(r.report.amota) << ',' << val(r.report.amotp)
        << ',' << val(r.report.mota) << ',' << val(r.report.motp) << ','
        << val(r.report.recall) << ',' << r.report.ids << ',' << r.report.fp
        << ',' << r.report.fn << ',' << val(r.report.latency) << ',';
    if (r.report.probe.ran)
      csv << val(r.report.probe.entropy) << ','
          << val(r.report.probe.score_std) << ','
          << val(r.report.probe.center_spread);
    else
      csv << "nan,nan,nan";
    csv << ',' << val(t.first_total) << ',' << val(t.last_total) << '\n';
  }
  std::ofstream out(fs::path(out_dir) / "ablation.csv", std::ios::binary);
  if (!out)
    throw std::runtime_error("ablate: cannot write " + out_dir +
                             "/ablation.csv");
  out << csv.str();

  return rows;
}

}  // namespace qtrack::cli
