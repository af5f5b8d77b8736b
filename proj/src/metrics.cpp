#include "afford/metrics.hpp"

#include <future>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace afford {

namespace {

MetricRecord score(const EvalPair& pair, double fixation_threshold) {
  MetricRecord rec;
  rec.id = pair.id;
  if (!pair.prediction) {
    rec.skipped = true;
    rec.skip_reason = pair.missing_reason;
    return rec;
  }
  try {
    rec.kld = kld(*pair.prediction, pair.ground_truth);
    rec.sim = sim(*pair.prediction, pair.ground_truth);
    const NssResult n = nss(*pair.prediction, pair.ground_truth, fixation_threshold);
    rec.nss = n.value;
    rec.nss_degenerate = n.degenerate;
  } catch (const Error& e) {
    rec = MetricRecord{pair.id, 0.0, 0.0, 0.0, false, true, e.what()};
  }
  return rec;
}

}  // namespace

MetricSummary evaluate_batch(const std::vector<EvalPair>& pairs, double fixation_threshold) {
  if (pairs.empty()) raise(ErrorCode::AllPairsSkipped, "no pairs to evaluate");
  MetricSummary summary;
  summary.records.resize(pairs.size());

  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t threads = std::min(workers, pairs.size());
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < threads; ++w)
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < pairs.size(); i += threads) summary.records[i] = score(pairs[i], fixation_threshold);
    }));
  for (auto& j : jobs) j.get();

  // fixed-order reduction keeps the means bitwise reproducible
  for (const auto& r : summary.records) {
    if (r.skipped) {
      ++summary.skipped;
      continue;
    }
    ++summary.evaluated;
    summary.mean_kld += r.kld;
    summary.mean_sim += r.sim;
    summary.mean_nss += r.nss;
  }
  if (summary.evaluated == 0) raise(ErrorCode::AllPairsSkipped, "every pair was skipped");
  const double n = static_cast<double>(summary.evaluated);
  summary.mean_kld /= n;
  summary.mean_sim /= n;
  summary.mean_nss /= n;
  return summary;
}

std::string report_json(const MetricSummary& summary) {
  using nlohmann::json;
  json items = json::array();
  for (const auto& r : summary.records) {
    json item = {{"id", r.id}, {"skipped", r.skipped}};
    if (r.skipped) {
      item["skip_reason"] = r.skip_reason;
    } else {
      item["kld"] = r.kld;
      item["sim"] = r.sim;
      item["nss"] = r.nss;
      item["nss_degenerate"] = r.nss_degenerate;
    }
    items.push_back(item);
  }
  json out = {{"summary",
               {{"kld", summary.mean_kld},
                {"sim", summary.mean_sim},
                {"nss", summary.mean_nss},
                {"evaluated", summary.evaluated},
                {"skipped", summary.skipped}}},
              {"items", items}};
  return out.dump(2) + "\n";
}

std::string report_table(const MetricSummary& summary) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "id" << std::right << std::setw(10) << "KLD" << std::setw(10) << "SIM"
     << std::setw(10) << "NSS" << "  note\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : summary.records) {
    os << std::left << std::setw(24) << r.id << std::right;
    if (r.skipped) {
      os << std::setw(10) << "-" << std::setw(10) << "-" << std::setw(10) << "-" << "  skipped: " << r.skip_reason;
    } else {
      os << std::setw(10) << r.kld << std::setw(10) << r.sim << std::setw(10) << r.nss;
      if (r.nss_degenerate) os << "  constant prediction";
    }
    os << '\n';
  }
  os << std::left << std::setw(24) << "mean" << std::right << std::setw(10) << summary.mean_kld << std::setw(10)
     << summary.mean_sim << std::setw(10) << summary.mean_nss << "  (" << summary.evaluated << " scored, "
     << summary.skipped << " skipped)\n";
  return os.str();
}

}  // namespace afford
