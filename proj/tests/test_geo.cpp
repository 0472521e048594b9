#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "rangemap/geo.hpp"
#include "rangemap/rng.hpp"

using namespace rangemap;
using geo::GeoCoordinate;
using geo::LocalFrame;
using geo::LocalPoint;

namespace {

const GeoCoordinate kSite{38.09, -109.60, 1800.0};

GeoCoordinate random_point_near(Rng& rng, const GeoCoordinate& center, double radius_m) {
  const double az = rng.uniform(0.0, 360.0);
  const double d = radius_m * std::sqrt(rng.uniform01());
  return geo::vincenty_direct(center, az, d);
}

double local_metric_distance(const GeoCoordinate& a, const GeoCoordinate& b) {
  const auto e = geo::Ellipsoid::wgs84();
  const double phi = a.latitude * M_PI / 180.0;
  const double e2 = e.flattening * (2.0 - e.flattening);
  const double w2 = 1.0 - e2 * std::sin(phi) * std::sin(phi);
  const double meridional = e.semi_major_axis * (1.0 - e2) / (w2 * std::sqrt(w2));
  const double normal = e.semi_major_axis / std::sqrt(w2);
  const double dn = (b.latitude - a.latitude) * M_PI / 180.0 * meridional;
  const double de = (b.longitude - a.longitude) * M_PI / 180.0 * normal * std::cos(phi);
  return std::hypot(dn, de);
}

}  // namespace

TEST_CASE("coincident points give zero distance and the documented azimuth") {
  const auto r = geo::vincenty_inverse(kSite, kSite);
  CHECK(r.distance == 0.0);
  CHECK(r.forward_azimuth == 0.0);
  CHECK(r.reverse_azimuth == 0.0);
}

TEST_CASE("meridian arc of 100 m agrees with the spherical oracle to 0.5%") {
  const GeoCoordinate b = geo::vincenty_direct(kSite, 0.0, 100.0);
  const double vd = geo::vincenty_inverse(kSite, b).distance;
  const double sd = oracles::spherical_distance(kSite, b);
  CHECK(std::abs(vd - sd) / vd < 0.005);
  CHECK(vd == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("inverse distance matches the geodesic ODE integrator within 1 mm") {
  Rng rng(555);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_point_near(rng, kSite, 250'000.0);
    const auto b = random_point_near(rng, kSite, 250'000.0);
    const double vd = geo::vincenty_inverse(a, b).distance;
    const double od = oracles::geodesic_distance_ode(a, b);
    worst = std::max(worst, std::abs(vd - od));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("direct with zero distance returns the start point") {
  const auto out = geo::vincenty_direct(kSite, 123.0, 0.0);
  CHECK(out.latitude == kSite.latitude);
  CHECK(out.longitude == kSite.longitude);
  CHECK(out.height == kSite.height);
}

TEST_CASE("direct due north from the equator raises latitude only") {
  const GeoCoordinate eq{0.0, 12.0, 0.0};
  const auto out = geo::vincenty_direct(eq, 0.0, 10'000.0);
  CHECK(out.latitude > eq.latitude);
  CHECK(out.longitude == doctest::Approx(eq.longitude).epsilon(1e-12));
}

TEST_CASE("direct then inverse round trip is below 1e-6 m") {
  Rng rng(556);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto a = random_point_near(rng, kSite, 250'000.0);
    const auto b = random_point_near(rng, kSite, 250'000.0);
    const auto inv = geo::vincenty_inverse(a, b);
    const auto back = geo::vincenty_direct(a, inv.forward_azimuth, inv.distance);
    worst = std::max(worst, local_metric_distance(b, back));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("swapping the endpoints gives bit-identical distance") {
  Rng rng(557);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_point_near(rng, kSite, 250'000.0);
    const auto b = random_point_near(rng, kSite, 250'000.0);
    const auto ab = geo::vincenty_inverse(a, b);
    const auto ba = geo::vincenty_inverse(b, a);
    CHECK(ab.distance == ba.distance);
    // The same geodesic walked backwards.
    CHECK(std::fmod(ab.forward_azimuth + 180.0, 360.0) ==
          doctest::Approx(ba.reverse_azimuth).epsilon(1e-9));
  }
}

TEST_CASE("azimuths are reported in [0, 360)") {
  Rng rng(558);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_point_near(rng, kSite, 100'000.0);
    const auto b = random_point_near(rng, kSite, 100'000.0);
    const auto r = geo::vincenty_inverse(a, b);
    CHECK(r.forward_azimuth >= 0.0);
    CHECK(r.forward_azimuth < 360.0);
    CHECK(r.reverse_azimuth >= 0.0);
    CHECK(r.reverse_azimuth < 360.0);
  }
}

TEST_CASE("triangle inequality holds within 1e-6 m at 100 km scale") {
  Rng rng(559);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_point_near(rng, kSite, 50'000.0);
    const auto b = random_point_near(rng, kSite, 50'000.0);
    const auto c = random_point_near(rng, kSite, 50'000.0);
    const double ab = geo::vincenty_inverse(a, b).distance;
    const double bc = geo::vincenty_inverse(b, c).distance;
    const double ac = geo::vincenty_inverse(a, c).distance;
    CHECK(ac <= ab + bc + 1e-6);
  }
}

TEST_CASE("nearly antipodal points raise NonConvergence") {
  const GeoCoordinate a{0.0, 0.0, 0.0};
  const GeoCoordinate b{0.5, 179.7, 0.0};
  CHECK_THROWS_AS(geo::vincenty_inverse(a, b), geo::NonConvergence);
}

TEST_CASE("coordinate validation rejects out-of-range fields") {
  CHECK_THROWS_AS((GeoCoordinate{91.0, 0.0, 0.0}).validate(), geo::GeoError);
  CHECK_THROWS_AS((GeoCoordinate{0.0, -180.0, 0.0}).validate(), geo::GeoError);
  CHECK_THROWS_AS((GeoCoordinate{0.0, 181.0, 0.0}).validate(), geo::GeoError);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS((GeoCoordinate{0.0, 0.0, inf}).validate(), geo::GeoError);
  CHECK_NOTHROW((GeoCoordinate{-90.0, 180.0, -10.0}).validate());
}

TEST_CASE("geo_to_local maps the origin to zero") {
  const LocalFrame frame{kSite};
  const LocalPoint p = geo::geo_to_local(frame, kSite);
  CHECK(p.east == 0.0);
  CHECK(p.north == 0.0);
  CHECK(p.up == 0.0);
}

TEST_CASE("a point 10 m due north lands at (0, 10, 0) within 1 mm") {
  const LocalFrame frame{kSite};
  const GeoCoordinate north = geo::vincenty_direct(kSite, 0.0, 10.0);
  const LocalPoint p = geo::geo_to_local(frame, north);
  CHECK(std::abs(p.east) < 1e-3);
  CHECK(std::abs(p.north - 10.0) < 1e-3);
  CHECK(p.up == 0.0);
}

TEST_CASE("local_to_geo of (3,4,0) sits 5 m away at atan2(3,4) azimuth") {
  const LocalFrame frame{kSite};
  const GeoCoordinate g = geo::local_to_geo(frame, {3.0, 4.0, 0.0});
  const auto inv = geo::vincenty_inverse(kSite, g);
  CHECK(inv.distance == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(inv.forward_azimuth == doctest::Approx(std::atan2(3.0, 4.0) * 180.0 / M_PI).epsilon(1e-9));
}

TEST_CASE("local frame round trips are below 1e-6 m inside the validity radius") {
  const LocalFrame frame{kSite};
  Rng rng(560);
  for (int i = 0; i < 300; ++i) {
    const LocalPoint q{rng.uniform(-5000.0, 5000.0), rng.uniform(-5000.0, 5000.0),
                       rng.uniform(-50.0, 50.0)};
    const GeoCoordinate g = geo::local_to_geo(frame, q);
    const LocalPoint back = geo::geo_to_local(frame, g);
    CHECK((back - q).norm() < 1e-6);

    const GeoCoordinate p = random_point_near(rng, kSite, 8000.0);
    const GeoCoordinate round = geo::local_to_geo(frame, geo::geo_to_local(frame, p));
    CHECK(local_metric_distance(p, round) < 1e-6);
  }
}

TEST_CASE("conversions beyond the validity radius raise OutOfRange") {
  const LocalFrame frame{kSite};
  CHECK_THROWS_AS(geo::local_to_geo(frame, {10'500.0, 0.0, 0.0}), geo::OutOfRange);
  const GeoCoordinate far = geo::vincenty_direct(kSite, 45.0, 11'000.0);
  CHECK_THROWS_AS(geo::geo_to_local(frame, far), geo::OutOfRange);
}
