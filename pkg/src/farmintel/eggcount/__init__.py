from .calibrate import CalibrationConfig, CalibrationError, CalibrationResult, calibrate
from .cluster import NOISE, dbscan
from .hough import fit_line_tls, hough_lines
from .session import CountingSession, Frame, read_detection_log, write_detection_log
from .tracking import (CLASSES, CalibrationFault, Detection, Track, TrackingError, TrackSet, WeightBin,
                       count_update, point_in_polygon, tracker_step)

__all__ = [
    "CLASSES", "CalibrationConfig", "CalibrationError", "CalibrationFault", "CalibrationResult",
    "CountingSession", "Detection", "Frame", "NOISE", "Track", "TrackSet", "TrackingError", "WeightBin",
    "calibrate", "count_update", "dbscan", "fit_line_tls", "hough_lines", "point_in_polygon",
    "read_detection_log", "tracker_step", "write_detection_log",
]
