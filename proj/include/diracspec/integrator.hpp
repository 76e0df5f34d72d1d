#pragma once

#include "diracspec/errors.hpp"
#include "diracspec/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace diracspec {

/// Dormand-Prince 8(5,3) coefficients (Hairer, Norsett, Wanner).
namespace dop853 {
constexpr double c2 = 0.526001519587677318785587544488e-01;
constexpr double c3 = 0.789002279381515978178381316732e-01;
constexpr double c4 = 0.118350341907227396726757197510e+00;
constexpr double c5 = 0.281649658092772603273242802490e+00;
constexpr double c6 = 0.333333333333333333333333333333e+00;
constexpr double c7 = 0.25e+00;
constexpr double c8 = 0.307692307692307692307692307692e+00;
constexpr double c9 = 0.651282051282051282051282051282e+00;
constexpr double c10 = 0.6e+00;
constexpr double c11 = 0.857142857142857142857142857142e+00;

constexpr double a21 = 5.26001519587677318785587544488e-2;
constexpr double a31 = 1.97250569845378994544595329183e-2;
constexpr double a32 = 5.91751709536136983633785987549e-2;
constexpr double a41 = 2.95875854768068491816892993775e-2;
constexpr double a43 = 8.87627564304205475450678981324e-2;
constexpr double a51 = 2.41365134159266685502369798665e-1;
constexpr double a53 = -8.84549479328286085344864962717e-1;
constexpr double a54 = 9.24834003261792003115737966543e-1;
constexpr double a61 = 3.7037037037037037037037037037e-2;
constexpr double a64 = 1.70828608729473871279604482173e-1;
constexpr double a65 = 1.25467687566822425016691814123e-1;
constexpr double a71 = 3.7109375e-2;
constexpr double a74 = 1.70252211019544039314978060272e-1;
constexpr double a75 = 6.02165389804559606850219397283e-2;
constexpr double a76 = -1.7578125e-2;
constexpr double a81 = 3.70920001185047927108779319836e-2;
constexpr double a84 = 1.70383925712239993810214054705e-1;
constexpr double a85 = 1.07262030446373284651809199168e-1;
constexpr double a86 = -1.53194377486244017527936158236e-2;
constexpr double a87 = 8.27378916381402288758473766002e-3;
constexpr double a91 = 6.24110958716075717114429577812e-1;
constexpr double a94 = -3.36089262944694129406857109825e0;
constexpr double a95 = -8.68219346841726006818189891453e-1;
constexpr double a96 = 2.75920996994467083049415600797e1;
constexpr double a97 = 2.01540675504778934086186788979e1;
constexpr double a98 = -4.34898841810699588477366255144e1;
constexpr double a101 = 4.77662536438264365890433908527e-1;
constexpr double a104 = -2.48811461997166764192642586468e0;
constexpr double a105 = -5.90290826836842996371446475743e-1;
constexpr double a106 = 2.12300514481811942347288949897e1;
constexpr double a107 = 1.52792336328824235832596922938e1;
constexpr double a108 = -3.32882109689848629194453265587e1;
constexpr double a109 = -2.03312017085086261358222928593e-2;
constexpr double a111 = -9.3714243008598732571704021658e-1;
constexpr double a114 = 5.18637242884406370830023853209e0;
constexpr double a115 = 1.09143734899672957818500254654e0;
constexpr double a116 = -8.14978701074692612513997267357e0;
constexpr double a117 = -1.85200656599969598641566180701e1;
constexpr double a118 = 2.27394870993505042818970056734e1;
constexpr double a119 = 2.49360555267965238987089396762e0;
constexpr double a1110 = -3.0467644718982195003823669022e0;
constexpr double a121 = 2.27331014751653820792359768449e0;
constexpr double a124 = -1.05344954667372501984066689879e1;
constexpr double a125 = -2.00087205822486249909675718444e0;
constexpr double a126 = -1.79589318631187989172765950534e1;
constexpr double a127 = 2.79488845294199600508499808837e1;
constexpr double a128 = -2.85899827713502369474065508674e0;
constexpr double a129 = -8.87285693353062954433549289258e0;
constexpr double a1210 = 1.23605671757943030647266201528e1;
constexpr double a1211 = 6.43392746015763530355970484046e-1;

constexpr double b1 = 5.42937341165687622380535766363e-2;
constexpr double b6 = 4.45031289275240888144113950566e0;
constexpr double b7 = 1.89151789931450038304281599044e0;
constexpr double b8 = -5.8012039600105847814672114227e0;
constexpr double b9 = 3.1116436695781989440891606237e-1;
constexpr double b10 = -1.52160949662516078556178806805e-1;
constexpr double b11 = 2.01365400804030348374776537501e-1;
constexpr double b12 = 4.47106157277725905176885569043e-2;

constexpr double bhh1 = 0.244094488188976377952755905512e+00;
constexpr double bhh2 = 0.733846688281611857341361741547e+00;
constexpr double bhh3 = 0.220588235294117647058823529412e-01;

constexpr double er1 = 0.1312004499419488073250102996e-01;
constexpr double er6 = -0.1225156446376204440720569753e+01;
constexpr double er7 = -0.4957589496572501915214079952e+00;
constexpr double er8 = 0.1664377182454986536961530415e+01;
constexpr double er9 = -0.3503288487499736816886487290e+00;
constexpr double er10 = 0.3341791187130174790297318841e+00;
constexpr double er11 = 0.8192320648511571246570742613e-01;
constexpr double er12 = -0.2235530786388629525884427845e-01;
}  // namespace dop853

struct IntegratorOptions {
  double atol = 1e-12;
  double rtol = 1e-12;
  std::size_t max_steps = 1'000'000;
  double safety = 0.9;
};

struct IntegratorStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  double worst_error = 0.0;  ///< largest accepted scaled error estimate
};

/// Adaptive DOP853 for complex Eigen states. `State` is any fixed-size
/// Eigen matrix of cplx; `Rhs` is callable as rhs(x, y) -> State.
/// Integrates y from x0 to x1 in place; `h` carries the step size guess in
/// and the last accepted step out, so consecutive segments reuse it.
template <class State, class Rhs>
void dop853_integrate(Rhs&& rhs, double x0, double x1, State& y, double& h,
                      const IntegratorOptions& opt, IntegratorStats* stats = nullptr) {
  using namespace dop853;
  const double span = x1 - x0;
  if (span <= 0) return;
  if (span < 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x0))) {
    y += span * rhs(x0, y);  // rounding-level gap between coincident points
    return;
  }
  const double n = static_cast<double>(y.size()) * 2.0;  // real components
  if (!(h > 0)) h = std::min(span, 1e-2);
  double x = x0;
  State k1 = rhs(x, y);
  double worst = 0;
  bool last_rejected = false;
  for (std::size_t step = 0;; ++step) {
    if (step > opt.max_steps)
      throw IntegrationError("step budget exhausted", worst);
    double hs = std::min(h, x1 - x);
    const bool final_step = hs >= x1 - x;
    if (hs < 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x)))
      throw IntegrationError("step size underflow", worst);

    State y1 = y + hs * a21 * k1;
    State k2 = rhs(x + c2 * hs, y1);
    y1 = y + hs * (a31 * k1 + a32 * k2);
    State k3 = rhs(x + c3 * hs, y1);
    y1 = y + hs * (a41 * k1 + a43 * k3);
    State k4 = rhs(x + c4 * hs, y1);
    y1 = y + hs * (a51 * k1 + a53 * k3 + a54 * k4);
    State k5 = rhs(x + c5 * hs, y1);
    y1 = y + hs * (a61 * k1 + a64 * k4 + a65 * k5);
    State k6 = rhs(x + c6 * hs, y1);
    y1 = y + hs * (a71 * k1 + a74 * k4 + a75 * k5 + a76 * k6);
    State k7 = rhs(x + c7 * hs, y1);
    y1 = y + hs * (a81 * k1 + a84 * k4 + a85 * k5 + a86 * k6 + a87 * k7);
    State k8 = rhs(x + c8 * hs, y1);
    y1 = y + hs * (a91 * k1 + a94 * k4 + a95 * k5 + a96 * k6 + a97 * k7 + a98 * k8);
    State k9 = rhs(x + c9 * hs, y1);
    y1 = y + hs * (a101 * k1 + a104 * k4 + a105 * k5 + a106 * k6 + a107 * k7 + a108 * k8 +
                   a109 * k9);
    State k10 = rhs(x + c10 * hs, y1);
    y1 = y + hs * (a111 * k1 + a114 * k4 + a115 * k5 + a116 * k6 + a117 * k7 + a118 * k8 +
                   a119 * k9 + a1110 * k10);
    State k11 = rhs(x + c11 * hs, y1);
    y1 = y + hs * (a121 * k1 + a124 * k4 + a125 * k5 + a126 * k6 + a127 * k7 + a128 * k8 +
                   a129 * k9 + a1210 * k10 + a1211 * k11);
    State k12 = rhs(x + hs, y1);

    State incr = b1 * k1 + b6 * k6 + b7 * k7 + b8 * k8 + b9 * k9 + b10 * k10 + b11 * k11 +
                 b12 * k12;
    State ynew = y + hs * incr;
    State e3 = incr - (bhh1 * k1 + bhh2 * k9 + bhh3 * k12);
    State e5 = er1 * k1 + er6 * k6 + er7 * k7 + er8 * k8 + er9 * k9 + er10 * k10 +
               er11 * k11 + er12 * k12;

    double err3 = 0, err5 = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      double sk = opt.atol + opt.rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
      double a = std::abs(e3(i)) / sk, b = std::abs(e5(i)) / sk;
      err3 += a * a;
      err5 += b * b;
    }
    double deno = err5 + 0.01 * err3;
    if (deno <= 0) deno = 1;
    double err = hs * err5 * std::sqrt(1.0 / (n * deno));
    if (!std::isfinite(err)) err = 1e300;

    double fac = std::pow(err, 1.0 / 8.0) / opt.safety;
    fac = std::clamp(fac, 1.0 / 6.0, 3.0);
    double hnew = hs / fac;
    if (err <= 1.0) {
      worst = std::max(worst, err);
      if (stats) ++stats->accepted;
      x = final_step ? x1 : x + hs;
      y = ynew;
      if (last_rejected) hnew = std::min(hnew, hs);
      last_rejected = false;
      if (!final_step) h = hnew;
      if (final_step) {
        // keep the unclipped proposal for the next segment
        h = std::max(h, hnew);
        break;
      }
      k1 = rhs(x, y);
    } else {
      if (stats) ++stats->rejected;
      last_rejected = true;
      h = hs / std::min(fac, 6.0);
      if (fac < 1.0) h = hs * 0.5;
    }
  }
  if (stats) stats->worst_error = std::max(stats->worst_error, worst);
}

}  // namespace diracspec
