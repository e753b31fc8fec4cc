"""Planning toolkit for per-call block erasure coding of voice over IP.

Modules:

``analytics``   residual loss and burst ratio of an (N+K, K) code, closed form
``channel``     Monte Carlo simulation of the coded Bernoulli channel
``emulator``    packet-level pipeline with a real Reed-Solomon codec (``udp`` for sockets)
``emodel``      ITU-T G.107 rating factor and MOS
``planner``     sweeps combining the above into report rows; ``cli`` fronts it
"""

__version__ = "0.1.0"
