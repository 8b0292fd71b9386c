#include "safecert/rng.hpp"

#include "safecert/smoothing.hpp"

namespace safecert {

double Rng::normal() { return phi_inv(uniform()); }

}  // namespace safecert
