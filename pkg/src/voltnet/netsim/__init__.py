"""Deterministic packet-level network simulation.

Submodules:
    wire   - frame objects with bit-exact Ethernet/ARP/IPv4/TCP/ICMP encoding
    pcap   - classic pcap capture writer
    core   - event scheduler, links, switches, the network container
    stack  - host/router stacks: ARP, IP routing, ICMP, TCP
"""

from .core import Link, Network, Scheduler
from .stack import Host, Router

__all__ = ["Link", "Network", "Scheduler", "Host", "Router"]
