# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled element kernels: the hot loops of P1 assembly.

Mirror of _kernels_py; both backends must return bitwise-comparable blocks
(same operation order per entry up to float non-associativity ~1e-15).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()

BACKEND_NAME = "compiled"


def stiffness_blocks(const double[:, :, ::1] grads, const double[::1] areas, const double[:, :, :, ::1] amat):
    cdef Py_ssize_t nt = grads.shape[0]
    cdef Py_ssize_t nq = amat.shape[1]
    cdef cnp.ndarray[double, ndim=3] out_arr = np.zeros((nt, 3, 3))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t t, q, i, j, a, b
    cdef double w, acc, gia
    for t in range(nt):
        w = areas[t] / nq
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for q in range(nq):
                    for a in range(3):
                        gia = grads[t, i, a]
                        for b in range(3):
                            acc += gia * amat[t, q, a, b] * grads[t, j, b]
                out[t, i, j] = w * acc
    return out_arr


def convection_blocks(const double[:, :, ::1] grads, const double[::1] areas,
                      const double[:, ::1] phi, const double[:, :, ::1] bvec):
    cdef Py_ssize_t nt = grads.shape[0]
    cdef Py_ssize_t nq = bvec.shape[1]
    cdef cnp.ndarray[double, ndim=3] out_arr = np.zeros((nt, 3, 3))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t t, q, i, j, a
    cdef double w, dot
    for t in range(nt):
        w = areas[t] / nq
        for q in range(nq):
            for i in range(3):
                dot = 0.0
                for a in range(3):
                    dot += bvec[t, q, a] * grads[t, i, a]
                for j in range(3):
                    out[t, i, j] += w * phi[q, j] * dot
    return out_arr


def mass_blocks(const double[::1] areas, const double[:, ::1] phi, const double[:, ::1] dvals):
    cdef Py_ssize_t nt = areas.shape[0]
    cdef Py_ssize_t nq = dvals.shape[1]
    cdef cnp.ndarray[double, ndim=3] out_arr = np.zeros((nt, 3, 3))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t t, q, i, j
    cdef double w, dq
    for t in range(nt):
        w = areas[t] / nq
        for q in range(nq):
            dq = dvals[t, q]
            for i in range(3):
                for j in range(3):
                    out[t, i, j] += w * dq * phi[q, i] * phi[q, j]
    return out_arr


def load_entries(const double[::1] areas, const double[:, ::1] phi, const double[:, ::1] fvals):
    cdef Py_ssize_t nt = areas.shape[0]
    cdef Py_ssize_t nq = fvals.shape[1]
    cdef cnp.ndarray[double, ndim=2] out_arr = np.zeros((nt, 3))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, q, i
    cdef double w
    for t in range(nt):
        w = areas[t] / nq
        for q in range(nq):
            for i in range(3):
                out[t, i] += w * fvals[t, q] * phi[q, i]
    return out_arr


def load_div_entries(const double[:, :, ::1] grads, const double[::1] areas, const double[:, :, ::1] fvec):
    cdef Py_ssize_t nt = grads.shape[0]
    cdef Py_ssize_t nq = fvec.shape[1]
    cdef cnp.ndarray[double, ndim=2] out_arr = np.zeros((nt, 3))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, q, i, a
    cdef double w, dot
    for t in range(nt):
        w = areas[t] / nq
        for q in range(nq):
            for i in range(3):
                dot = 0.0
                for a in range(3):
                    dot += fvec[t, q, a] * grads[t, i, a]
                out[t, i] -= w * dot
    return out_arr


def power_sum(const double[::1] areas, const double[:, ::1] vals, double p):
    cdef Py_ssize_t nt = areas.shape[0]
    cdef Py_ssize_t nq = vals.shape[1]
    cdef Py_ssize_t t, q
    cdef double acc = 0.0, w, v
    if p == 2.0:  # dominant case: avoid libm pow
        for t in range(nt):
            w = areas[t] / nq
            for q in range(nq):
                v = vals[t, q]
                acc += w * v * v
        return acc
    for t in range(nt):
        w = areas[t] / nq
        for q in range(nq):
            acc += w * pow(fabs(vals[t, q]), p)
    return acc
