from django import forms
from django.core.exceptions import ValidationError
from django.db import models
from django.utils.translation import gettext_lazy as _

ISO_DATE_FORMATS = ["%Y-%m-%d"]


class QualityFlag(models.TextChoices):
    GOOD = "good", _("Good")
    GAP_FILLED = "gapfilled", _("Gap filled")
    MISSING = "missing", _("Missing")


class ChangeType(models.TextChoices):
    DISASTER = "disaster", _("Disaster")
    CONFLICT = "conflict", _("Conflict")
    URBANIZATION = "urbanization", _("Urbanization")


class TimeUnit(models.TextChoices):
    DAILY = "daily", _("Daily")
    YEARLY = "yearly", _("Yearly")


class PixelRecordForm(forms.Form):
    """One row of the pixel CSV,
    ``date,pixel_id,radiance,latitude,pixel_height_deg,pixel_width_deg,quality``.
    """
    date = forms.DateField(input_formats=ISO_DATE_FORMATS)
    pixel_id = forms.CharField(max_length=255)

    # May be empty for missing pixels
    radiance = forms.FloatField(required=False)
    latitude = forms.FloatField(min_value=-90, max_value=90)
    pixel_height_deg = forms.FloatField()
    pixel_width_deg = forms.FloatField()
    quality = forms.ChoiceField(choices=QualityFlag.choices)

    def clean_pixel_height_deg(self):
        value = self.cleaned_data["pixel_height_deg"]
        if value <= 0:
            raise ValidationError(
                _("pixel height must be positive, while got %(value)s"),
                code="non_positive", params={"value": value})
        return value

    def clean_pixel_width_deg(self):
        value = self.cleaned_data["pixel_width_deg"]
        if value <= 0:
            raise ValidationError(
                _("pixel width must be positive, while got %(value)s"),
                code="non_positive", params={"value": value})
        return value

    def clean(self):
        cleaned_data = super().clean()
        quality = cleaned_data.get("quality")
        radiance = cleaned_data.get("radiance")
        latitude = cleaned_data.get("latitude")
        height = cleaned_data.get("pixel_height_deg")

        if quality is not None and quality != QualityFlag.MISSING:
            if radiance is None:
                self.add_error("radiance", ValidationError(
                    _("radiance is required unless quality is 'missing'"),
                    code="required"))
            elif radiance < 0:
                self.add_error("radiance", ValidationError(
                    _("radiance must be non-negative, while got %(value)s"),
                    code="negative", params={"value": radiance}))

        if (latitude is not None and height is not None
                and abs(latitude) + height / 2 > 90):
            raise ValidationError(
                _("pixel centered at latitude %(latitude)s with height "
                  "%(height)s extends beyond the pole"),
                code="beyond_pole",
                params={"latitude": latitude, "height": height})
        return cleaned_data


class ZoneRecordForm(forms.Form):
    """One row of the pre-aggregated zone CSV, ``date,radiance,gap``."""
    date = forms.DateField(input_formats=ISO_DATE_FORMATS)
    radiance = forms.FloatField(required=False)
    gap = forms.TypedChoiceField(
        choices=(("0", "0"), ("1", "1")), coerce=lambda v: v == "1")

    def clean(self):
        cleaned_data = super().clean()
        gap = cleaned_data.get("gap")
        radiance = cleaned_data.get("radiance")
        if gap is False:
            if radiance is None:
                self.add_error("radiance", ValidationError(
                    _("radiance is required on non-gap days"), code="required"))
            elif radiance < 0:
                self.add_error("radiance", ValidationError(
                    _("radiance must be non-negative, while got %(value)s"),
                    code="negative", params={"value": radiance}))
        return cleaned_data


class GroundTruthForm(forms.Form):
    """One row of the ground-truth CSV, ``zone_id,start,end,change_type,unit``.
    An empty ``end`` means the event is still open."""
    zone_id = forms.CharField(max_length=255)
    start = forms.DateField(input_formats=ISO_DATE_FORMATS)
    end = forms.DateField(input_formats=ISO_DATE_FORMATS, required=False)
    change_type = forms.ChoiceField(choices=ChangeType.choices)
    unit = forms.ChoiceField(choices=TimeUnit.choices)

    def clean(self):
        cleaned_data = super().clean()
        start = cleaned_data.get("start")
        end = cleaned_data.get("end")
        if start is not None and end is not None and end < start:
            raise ValidationError(
                _("event end %(end)s precedes its start %(start)s"),
                code="end_before_start", params={"start": start, "end": end})

        if (cleaned_data.get("unit") == TimeUnit.YEARLY
                and cleaned_data.get("change_type") not in (
                    None, ChangeType.URBANIZATION)):
            self.add_error("unit", ValidationError(
                _("yearly units are only used for urbanization events"),
                code="yearly_not_urbanization"))
        return cleaned_data


def format_form_errors(form):
    """Flatten ``form.errors`` into one line, e.g.
    ``radiance: Enter a number.; quality: Select a valid choice.``"""
    parts = []
    for field, errors in form.errors.items():
        prefix = "" if field == "__all__" else f"{field}: "
        parts.extend(f"{prefix}{error}" for error in errors)
    return "; ".join(parts)
