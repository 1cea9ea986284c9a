#include "sfe/explain.hpp"

#include <array>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "sfe/data.hpp"

namespace sfe {

namespace {

struct MethodNames {
  Method method;
  std::string_view display;
  std::string_view key;
};

constexpr std::array<MethodNames, 6> kMethods = {{
    {Method::IndMarg, "IndMarg", "indmarg"},
    {Method::SeqMarg, "SeqMarg", "seqmarg"},
    {Method::IndDO, "IndDO", "inddo"},
    {Method::SeqDO, "SeqDO", "seqdo"},
    {Method::Random, "Random", "random"},
    {Method::OptOracle, "OptOracle", "optoracle"},
}};

} // namespace

std::string_view method_name(Method m)
{
  for (const auto& e : kMethods)
    if (e.method == m)
      return e.display;
  return "?";
}

std::string_view method_key(Method m)
{
  for (const auto& e : kMethods)
    if (e.method == m)
      return e.key;
  return "?";
}

std::optional<Method> parse_method(std::string_view key)
{
  for (const auto& e : kMethods)
    if (e.key == key || e.display == key)
      return e.method;
  return std::nullopt;
}

bool uses_detector(Method m)
{
  return m != Method::Random && m != Method::OptOracle;
}

Sfe explain_random(int n, int k, std::uint64_t seed)
{
  if (n < 1)
    throw std::invalid_argument("dimensionality must be positive");
  detail::check_length(k, n);
  Rng rng = make_rng(mix_seed(seed, 0x5EED));
  std::vector<int> perm = detail::all_features(n);
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + uniform_index(rng, static_cast<std::size_t>(n - i));
    std::swap(perm[static_cast<std::size_t>(i)], perm[j]);
  }
  perm.resize(static_cast<std::size_t>(k));
  return {perm, std::vector<double>(static_cast<std::size_t>(k), 0.0), Method::Random};
}

std::string sfe_csv_header()
{
  return "point_index,method,order,step_scores";
}

std::string sfe_csv_row(std::size_t point_index, const Sfe& sfe)
{
  std::vector<std::string> scores;
  for (double s : sfe.step_scores)
    scores.push_back(format_real(s));
  return fmt::format("{},{},{},{}", point_index, method_key(sfe.method), fmt::join(sfe.order, ";"),
                     fmt::join(scores, ";"));
}

} // namespace sfe
