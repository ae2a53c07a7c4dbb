"""Frozen regression values shared between test modules."""

# min transverse tidal eigenvalue over the 3 x 7 grid [-0.5, 0.5] x [-0.3, 0.3] of the
# cart-pendulum Jacobi metric at E = V(0) + 0.05, default parameters and directions
CART_JACOBI_MIN_EIG = -2158.1998928811
