from django.contrib import admin
from .models import SimulationRun


@admin.register(SimulationRun)
class SimulationRunAdmin(admin.ModelAdmin):
    list_display = ('scenario', 'source', 'max_error_deg', 'max_error_deg_no_saturation', 'runtime', 'created_at', 'has_estimates')
    list_filter = ('scenario', 'source', 'created_at')
    search_fields = ('scenario', 'csv_path')
    readonly_fields = ('id', 'created_at')
    date_hierarchy = 'created_at'

    def has_estimates(self, obj):
        return obj.has_estimates
    has_estimates.boolean = True
    has_estimates.short_description = 'Has Estimates'
