"""Synthetic SCADA testbed, flow features and intrusion detection learners."""
