#include "rangemap/geo.hpp"

#include <algorithm>
#include <cmath>

namespace rangemap::geo {

namespace {

constexpr double kDegToRad = M_PI / 180.0;
constexpr double kRadToDeg = 180.0 / M_PI;
// Sub-micrometer at Earth scale; the iterations also stop on an exact
// floating-point fixpoint, so the tight tolerance cannot spin.
constexpr double kLambdaTol = 1e-15;  // rad
constexpr int kMaxIterations = 200;

double normalize_azimuth_deg(double az) {
  az = std::fmod(az, 360.0);
  if (az < 0.0) az += 360.0;
  if (az == 360.0) az = 0.0;
  return az;
}

struct RawInverse {
  double distance;
  double alpha1_rad;  // azimuth at first point
  double alpha2_rad;  // azimuth at second point (continuing direction)
};

// Vincenty (1975) inverse formula. Assumes the caller has already handled
// the coincident case.
RawInverse inverse_core(const GeoCoordinate& a, const GeoCoordinate& b, const Ellipsoid& e) {
  const double f = e.flattening;
  const double semi_a = e.semi_major_axis;
  const double semi_b = e.semi_minor_axis();

  const double phi1 = a.latitude * kDegToRad;
  const double phi2 = b.latitude * kDegToRad;
  const double big_l = (b.longitude - a.longitude) * kDegToRad;

  const double u1 = std::atan((1.0 - f) * std::tan(phi1));
  const double u2 = std::atan((1.0 - f) * std::tan(phi2));
  const double sin_u1 = std::sin(u1), cos_u1 = std::cos(u1);
  const double sin_u2 = std::sin(u2), cos_u2 = std::cos(u2);

  double lambda = big_l;
  double sin_sigma = 0.0, cos_sigma = 0.0, sigma = 0.0;
  double cos_sq_alpha = 0.0, cos_2sigma_m = 0.0;
  double sin_lambda = 0.0, cos_lambda = 0.0;

  bool converged = false;
  for (int i = 0; i < kMaxIterations; ++i) {
    sin_lambda = std::sin(lambda);
    cos_lambda = std::cos(lambda);
    const double t1 = cos_u2 * sin_lambda;
    const double t2 = cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda;
    sin_sigma = std::sqrt(t1 * t1 + t2 * t2);
    if (sin_sigma == 0.0) {
      // coincident points
      return {0.0, 0.0, 0.0};
    }
    cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lambda;
    sigma = std::atan2(sin_sigma, cos_sigma);
    const double sin_alpha = cos_u1 * cos_u2 * sin_lambda / sin_sigma;
    cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
    // equatorial line: cos_sq_alpha == 0
    cos_2sigma_m = (cos_sq_alpha != 0.0)
                       ? cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
                       : 0.0;
    const double c = f / 16.0 * cos_sq_alpha * (4.0 + f * (4.0 - 3.0 * cos_sq_alpha));
    const double lambda_prev = lambda;
    lambda = big_l + (1.0 - c) * f * sin_alpha *
                         (sigma + c * sin_sigma *
                                      (cos_2sigma_m +
                                       c * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)));
    if (std::abs(lambda - lambda_prev) < kLambdaTol || lambda == lambda_prev) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NonConvergence("vincenty_inverse did not converge (points nearly antipodal)");
  }

  const double u_sq = cos_sq_alpha * (semi_a * semi_a - semi_b * semi_b) / (semi_b * semi_b);
  const double big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
  const double big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
  const double delta_sigma =
      big_b * sin_sigma *
      (cos_2sigma_m + big_b / 4.0 *
                          (cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m) -
                           big_b / 6.0 * cos_2sigma_m * (-3.0 + 4.0 * sin_sigma * sin_sigma) *
                               (-3.0 + 4.0 * cos_2sigma_m * cos_2sigma_m)));
  const double distance = semi_b * big_a * (sigma - delta_sigma);

  const double alpha1 = std::atan2(cos_u2 * sin_lambda, cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda);
  const double alpha2 = std::atan2(cos_u1 * sin_lambda, -sin_u1 * cos_u2 + cos_u1 * sin_u2 * cos_lambda);
  return {distance, alpha1, alpha2};
}

bool same_horizontal(const GeoCoordinate& a, const GeoCoordinate& b) {
  return a.latitude == b.latitude && a.longitude == b.longitude;
}

// Canonical ordering so that inverse(a, b) and inverse(b, a) run the exact
// same floating-point path and report the same distance bit-for-bit.
bool canonical_before(const GeoCoordinate& a, const GeoCoordinate& b) {
  if (a.latitude != b.latitude) return a.latitude < b.latitude;
  return a.longitude < b.longitude;
}

}  // namespace

void GeoCoordinate::validate() const {
  if (!(latitude >= -90.0 && latitude <= 90.0)) {
    throw GeoError("latitude out of range [-90, 90]: " + std::to_string(latitude));
  }
  if (!(longitude > -180.0 && longitude <= 180.0)) {
    throw GeoError("longitude out of range (-180, 180]: " + std::to_string(longitude));
  }
  if (!std::isfinite(height)) {
    throw GeoError("height must be finite");
  }
}

double LocalPoint::norm() const { return std::sqrt(east * east + north * north + up * up); }

double LocalPoint::horizontal_norm() const { return std::sqrt(east * east + north * north); }

InverseResult vincenty_inverse(const GeoCoordinate& a, const GeoCoordinate& b, const Ellipsoid& e) {
  a.validate();
  b.validate();
  if (same_horizontal(a, b)) {
    return {0.0, 0.0, 0.0};
  }
  if (canonical_before(a, b)) {
    const RawInverse r = inverse_core(a, b, e);
    return {r.distance, normalize_azimuth_deg(r.alpha1_rad * kRadToDeg),
            normalize_azimuth_deg(r.alpha2_rad * kRadToDeg)};
  }
  // Swapped evaluation: the geodesic is the same curve walked backwards, so
  // forward(a->b) = reverse(b->a) + 180 and vice versa.
  const RawInverse r = inverse_core(b, a, e);
  return {r.distance, normalize_azimuth_deg(r.alpha2_rad * kRadToDeg + 180.0),
          normalize_azimuth_deg(r.alpha1_rad * kRadToDeg + 180.0)};
}

GeoCoordinate vincenty_direct(const GeoCoordinate& a, double azimuth_deg, double distance_m,
                              const Ellipsoid& e) {
  a.validate();
  if (!(distance_m >= 0.0)) {
    throw GeoError("vincenty_direct: distance must be >= 0");
  }
  if (distance_m == 0.0) {
    return a;
  }

  const double f = e.flattening;
  const double semi_a = e.semi_major_axis;
  const double semi_b = e.semi_minor_axis();

  const double phi1 = a.latitude * kDegToRad;
  const double alpha1 = azimuth_deg * kDegToRad;
  const double sin_alpha1 = std::sin(alpha1), cos_alpha1 = std::cos(alpha1);

  const double tan_u1 = (1.0 - f) * std::tan(phi1);
  const double cos_u1 = 1.0 / std::sqrt(1.0 + tan_u1 * tan_u1);
  const double sin_u1 = tan_u1 * cos_u1;

  const double sigma1 = std::atan2(tan_u1, cos_alpha1);
  const double sin_alpha = cos_u1 * sin_alpha1;
  const double cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
  const double u_sq = cos_sq_alpha * (semi_a * semi_a - semi_b * semi_b) / (semi_b * semi_b);
  const double big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
  const double big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));

  double sigma = distance_m / (semi_b * big_a);
  double cos_2sigma_m = 0.0, sin_sigma = 0.0, cos_sigma = 0.0;
  for (int i = 0; i < kMaxIterations; ++i) {
    cos_2sigma_m = std::cos(2.0 * sigma1 + sigma);
    sin_sigma = std::sin(sigma);
    cos_sigma = std::cos(sigma);
    const double delta_sigma =
        big_b * sin_sigma *
        (cos_2sigma_m + big_b / 4.0 *
                            (cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m) -
                             big_b / 6.0 * cos_2sigma_m * (-3.0 + 4.0 * sin_sigma * sin_sigma) *
                                 (-3.0 + 4.0 * cos_2sigma_m * cos_2sigma_m)));
    const double sigma_prev = sigma;
    sigma = distance_m / (semi_b * big_a) + delta_sigma;
    if (std::abs(sigma - sigma_prev) < kLambdaTol || sigma == sigma_prev) break;
  }

  const double tmp = sin_u1 * sin_sigma - cos_u1 * cos_sigma * cos_alpha1;
  const double phi2 = std::atan2(sin_u1 * cos_sigma + cos_u1 * sin_sigma * cos_alpha1,
                                 (1.0 - f) * std::sqrt(sin_alpha * sin_alpha + tmp * tmp));
  const double lambda = std::atan2(sin_sigma * sin_alpha1, cos_u1 * cos_sigma - sin_u1 * sin_sigma * cos_alpha1);
  const double c = f / 16.0 * cos_sq_alpha * (4.0 + f * (4.0 - 3.0 * cos_sq_alpha));
  const double big_l =
      lambda - (1.0 - c) * f * sin_alpha *
                   (sigma + c * sin_sigma *
                                (cos_2sigma_m + c * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)));

  double lon2 = a.longitude + big_l * kRadToDeg;
  if (lon2 > 180.0) lon2 -= 360.0;
  if (lon2 <= -180.0) lon2 += 360.0;

  return {phi2 * kRadToDeg, lon2, a.height};
}

LocalPoint geo_to_local(const LocalFrame& frame, const GeoCoordinate& p, const Ellipsoid& e) {
  const InverseResult inv = vincenty_inverse(frame.origin, p, e);
  if (inv.distance > LocalFrame::kValidityRadius) {
    throw OutOfRange("geo_to_local: point " + std::to_string(inv.distance) +
                     " m from origin exceeds ENU validity radius");
  }
  const double az = inv.forward_azimuth * kDegToRad;
  return {inv.distance * std::sin(az), inv.distance * std::cos(az), p.height - frame.origin.height};
}

GeoCoordinate local_to_geo(const LocalFrame& frame, const LocalPoint& q, const Ellipsoid& e) {
  const double d = q.horizontal_norm();
  if (d > LocalFrame::kValidityRadius) {
    throw OutOfRange("local_to_geo: point exceeds ENU validity radius");
  }
  GeoCoordinate out = frame.origin;
  if (d > 0.0) {
    const double az = std::atan2(q.east, q.north) * kRadToDeg;
    out = vincenty_direct(frame.origin, normalize_azimuth_deg(az), d, e);
  }
  out.height = frame.origin.height + q.up;
  return out;
}

}  // namespace rangemap::geo
