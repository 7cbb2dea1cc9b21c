import logging

si_prefixes = ["", "k", "M", "G", "T", "P", "E", "Z", "Y"]

log = logging.getLogger(__name__)


def pretty_bits(nbits):
    i = 0
    while nbits >= 1000 and i + 1 < len(si_prefixes):
        nbits /= 1000
        i += 1
    return ("{:.0f} bits" if i == 0 else "{:.2f} {}bits").format(nbits, si_prefixes[i])


def log_stats(label, agg):
    log.info(
        "{}: average power {:.4g} W, average queue {}, power-minus-rate {:.4g}, "
        "{} constraint violations".format(
            label,
            agg["avg_power"],
            pretty_bits(agg["avg_queue"]),
            agg["avg_pmr"],
            int(agg["violations"]),
        )
    )
