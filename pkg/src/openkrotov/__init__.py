from ._backend import NAME as BACKEND
